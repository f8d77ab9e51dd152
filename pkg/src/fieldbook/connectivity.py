"""Connectivity probes: injected providers instead of real radios.

A provider is a callable returning the per-sink up/down map for one
probe. Probing never touches queue state.

Scripted provider file format, one line per tick:

    # comments and blank lines are skipped
    *=down private_db=up
    private_db=up public_microblog=up

Tokens are ``sink_id=up`` or ``sink_id=down``; ``*`` sets every known
sink first and named sinks override it. Sinks a line does not mention
default to down (unless ``*`` said otherwise). After the last line the
final state persists.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from datetime import datetime
from typing import Callable, Iterable, Sequence

from .errors import ValidationError

ConnectivityProvider = Callable[[], dict[str, bool]]


@dataclass
class ProbeResult:
    """Last probe outcome, kept for status reporting."""

    up: dict[str, bool]
    probed_at: datetime | None = None


def always_up(sink_ids: Iterable[str]) -> ConnectivityProvider:
    state = {s: True for s in sink_ids}
    return lambda: dict(state)


def always_down(sink_ids: Iterable[str]) -> ConnectivityProvider:
    state = {s: False for s in sink_ids}
    return lambda: dict(state)


def parse_script(text: str, sink_ids: Sequence[str]) -> list[dict[str, bool]]:
    ticks: list[dict[str, bool]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        state = {s: False for s in sink_ids}
        for token in line.split():
            if "=" not in token:
                raise ValidationError(
                    f"connectivity script line {lineno}: bad token {token!r}"
                )
            name, _, flag = token.partition("=")
            if flag not in ("up", "down"):
                raise ValidationError(
                    f"connectivity script line {lineno}: flag must be up/down, got {flag!r}"
                )
            value = flag == "up"
            if name == "*":
                state = {s: value for s in sink_ids}
            elif name in state:
                state[name] = value
            else:
                raise ValidationError(
                    f"connectivity script line {lineno}: unknown sink {name!r}"
                )
        ticks.append(state)
    if not ticks:
        raise ValidationError("connectivity script has no ticks")
    return ticks


@dataclass
class ScriptedConnectivity:
    """Replays a parsed script, one tick per probe; holds the last state."""

    ticks: list[dict[str, bool]]
    _cursor: int = 0

    @classmethod
    def from_text(cls, text: str, sink_ids: Sequence[str]) -> "ScriptedConnectivity":
        return cls(parse_script(text, sink_ids))

    def __call__(self) -> dict[str, bool]:
        state = self.ticks[min(self._cursor, len(self.ticks) - 1)]
        self._cursor += 1
        return dict(state)


@dataclass
class RandomConnectivity:
    """Each probe flips every sink up with the given probability."""

    sink_ids: Sequence[str]
    up_probability: float = 0.3
    rng: random.Random = field(default_factory=lambda: random.Random(0))

    def __call__(self) -> dict[str, bool]:
        return {s: self.rng.random() < self.up_probability for s in self.sink_ids}
