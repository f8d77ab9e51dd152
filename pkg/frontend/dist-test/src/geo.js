/**
 * Location capture with manual fallback.
 *
 * Field devices often have no fix (obstructions, indoors, no GPS), so
 * a failed or unavailable provider switches the note form to a free
 * text location description instead of blocking the note.
 */
export function browserLocationProvider(timeoutMs = 8000) {
    return () => new Promise((resolve) => {
        if (typeof navigator === "undefined" || !navigator.geolocation) {
            resolve(null);
            return;
        }
        navigator.geolocation.getCurrentPosition((position) => resolve({
            latitude: position.coords.latitude,
            longitude: position.coords.longitude,
        }), (error) => {
            console.warn("geolocation unavailable:", error.message);
            resolve(null);
        }, { enableHighAccuracy: true, timeout: timeoutMs });
    });
}
export function fixedLocationProvider(latitude, longitude) {
    return () => Promise.resolve({ latitude, longitude });
}
export function unavailableLocationProvider() {
    return () => Promise.resolve(null);
}
