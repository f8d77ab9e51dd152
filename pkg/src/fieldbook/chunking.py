"""Split over-length notes into numbered microblog posts.

Annotations have no length cap, but a public microblog sink does. An
over-limit text is split on character boundaries into n parts, each
suffixed " (i/n)". The part width is fixed from the final n (widest
suffix " (n/n)"), computed in two passes: first find the smallest n
whose fixed width covers the text, then cut.
"""
from __future__ import annotations

from .errors import ChunkingError

# " (i/n)" cannot fit alongside any text below this limit.
MIN_POST_LENGTH = 10


def suffix_width(parts: int) -> int:
    """Width reserved per part: len(" (n/n)") for the final part count."""
    return 4 + 2 * len(str(parts))


def part_count(text_length: int, max_post_length: int) -> int:
    """Smallest n such that n parts of fixed capacity cover the text.

    Capacity shrinks as n gains digits, so feasibility is not monotonic;
    walk n upward and give up when the suffix leaves no room for text.
    """
    if max_post_length < MIN_POST_LENGTH:
        raise ChunkingError(
            f"max_post_length {max_post_length} < {MIN_POST_LENGTH}: "
            "the part suffix cannot fit",
            field="max_post_length",
        )
    if text_length <= max_post_length:
        return 1
    n = 2
    while True:
        capacity = max_post_length - suffix_width(n)
        if capacity <= 0:
            raise ChunkingError(
                f"text of {text_length} chars cannot be chunked within "
                f"limit {max_post_length}"
            )
        if n * capacity >= text_length:
            return n
        n += 1


def chunk_for_sink(text: str, max_post_length: int) -> list[str]:
    """Render a text as an ordered list of post payloads, each within limit."""
    n = part_count(len(text), max_post_length)
    if n == 1:
        return [text]
    capacity = max_post_length - suffix_width(n)
    return [
        text[i * capacity : (i + 1) * capacity] + f" ({i + 1}/{n})"
        for i in range(n)
    ]
