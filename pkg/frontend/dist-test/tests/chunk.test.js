import assert from "node:assert/strict";
import { test } from "node:test";
import { chunkCounterLabel, partCount } from "../src/chunk.js";
test("under the limit is a single post", () => {
    assert.equal(partCount(100, 140), 1);
    assert.equal(partCount(140, 140), 1);
});
test("worked case: 300 chars at 140 becomes 3 parts", () => {
    assert.equal(partCount(300, 140), 3);
});
test("matches a brute-force scan over a range", () => {
    // independent check: smallest n where n * (limit - " (n/n)".length) covers
    const oracle = (length, limit) => {
        if (length <= limit)
            return 1;
        for (let n = 2; n <= length + 1; n++) {
            const room = limit - ` (${n}/${n})`.length;
            if (room <= 0)
                return null;
            if (room * n >= length)
                return n;
        }
        return null;
    };
    for (let length = 0; length <= 2000; length += 37) {
        for (const limit of [10, 50, 140, 280, 500]) {
            assert.equal(partCount(length, limit), oracle(length, limit), `${length}@${limit}`);
        }
    }
});
test("tiny limits and oversize texts are reported as unpostable", () => {
    assert.equal(partCount(50, 9), null);
    assert.equal(partCount(10000, 10), null);
});
test("counter label reflects visibility", () => {
    assert.equal(chunkCounterLabel(300, false), "300 chars");
    assert.equal(chunkCounterLabel(300, true), "300 chars — will post as 3 parts");
    assert.equal(chunkCounterLabel(80, true), "80 chars — fits in one post");
    assert.match(chunkCounterLabel(10000, true, 10), /too long/);
});
