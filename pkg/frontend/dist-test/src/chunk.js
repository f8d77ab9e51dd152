/**
 * Local mirror of the sync engine's part-count arithmetic, so the note
 * form can show a live "will post as N parts" counter without a round
 * trip. The service's /chunk-preview endpoint is authoritative; the
 * test suite asserts the two agree.
 */
export const DEFAULT_PUBLIC_LIMIT = 140;
function suffixWidth(parts) {
    // " (i/n)" sized for the widest case i = n
    return 4 + 2 * String(parts).length;
}
/** Smallest part count covering the text, or null when none can. */
export function partCount(textLength, limit = DEFAULT_PUBLIC_LIMIT) {
    if (limit < 10)
        return null;
    if (textLength <= limit)
        return 1;
    for (let n = 2;; n++) {
        const capacity = limit - suffixWidth(n);
        if (capacity <= 0)
            return null;
        if (n * capacity >= textLength)
            return n;
    }
}
export function chunkCounterLabel(textLength, isPublic, limit) {
    if (!isPublic)
        return `${textLength} chars`;
    const parts = partCount(textLength, limit);
    if (parts === null)
        return `${textLength} chars — too long for the public sink`;
    if (parts === 1)
        return `${textLength} chars — fits in one post`;
    return `${textLength} chars — will post as ${parts} parts`;
}
