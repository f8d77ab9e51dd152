/**
 * Location capture with manual fallback.
 *
 * Field devices often have no fix (obstructions, indoors, no GPS), so
 * a failed or unavailable provider switches the note form to a free
 * text location description instead of blocking the note.
 */

export interface Fix {
  latitude: number;
  longitude: number;
}

export type LocationProvider = () => Promise<Fix | null>;

export function browserLocationProvider(timeoutMs = 8000): LocationProvider {
  return () =>
    new Promise((resolve) => {
      if (typeof navigator === "undefined" || !navigator.geolocation) {
        resolve(null);
        return;
      }
      navigator.geolocation.getCurrentPosition(
        (position) =>
          resolve({
            latitude: position.coords.latitude,
            longitude: position.coords.longitude,
          }),
        (error) => {
          console.warn("geolocation unavailable:", error.message);
          resolve(null);
        },
        { enableHighAccuracy: true, timeout: timeoutMs },
      );
    });
}

export function fixedLocationProvider(latitude: number, longitude: number): LocationProvider {
  return () => Promise.resolve({ latitude, longitude });
}

export function unavailableLocationProvider(): LocationProvider {
  return () => Promise.resolve(null);
}
