"""Runtime configuration and assembly.

A data directory holds everything one device needs: ``config.json``,
one ``<table_id>.xml`` per table, ``journal.log`` and the file-backed
sink logs under ``sinks/``. A missing config file means defaults; a
partial file overrides only the keys it names.

config.json keys:

    snapshot_every        mutations between snapshots (default 50)
    tick_interval_s       sync push cadence in seconds (default 30)
    probe_interval_s      connectivity probe cadence (default 30)
    backoff               {base_s, factor, cap_s, jitter}
    sinks                 [{sink_id, endpoint, max_post_length,
                            supports_lookup, adapter: "file"|"memory"}]
    connectivity          {mode: "always_up"|"always_down"|"script",
                            script: path relative to the data dir}
    bind_host, bind_port  HTTP service address (localhost by default)
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .clock import Clock, system_clock
from .connectivity import (
    ConnectivityProvider,
    ScriptedConnectivity,
    always_down,
    always_up,
)
from .errors import ValidationError
from .sinks import (
    FileSink,
    MemorySink,
    SinkAdapter,
    SinkDescriptor,
    default_registry,
    validate_registry,
)
from .store import FieldStore
from .sync import BackoffPolicy, SyncEngine

DEFAULT_BIND_HOST = "127.0.0.1"
DEFAULT_BIND_PORT = 8377


@dataclass
class AppConfig:
    data_dir: Path
    snapshot_every: int = 50
    tick_interval_s: float = 30.0
    probe_interval_s: float = 30.0
    backoff: BackoffPolicy = field(default_factory=BackoffPolicy)
    sinks: dict[str, SinkDescriptor] = field(default_factory=default_registry)
    sink_adapters: dict[str, str] = field(default_factory=dict)  # sink_id -> "file"|"memory"
    connectivity_mode: str = "always_up"
    connectivity_script: str | None = None
    bind_host: str = DEFAULT_BIND_HOST
    bind_port: int = DEFAULT_BIND_PORT


def load_config(data_dir: Path | str) -> AppConfig:
    data_dir = Path(data_dir)
    config = AppConfig(data_dir=data_dir)
    path = data_dir / "config.json"
    if not path.exists():
        return config
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise ValidationError(f"bad config file {path}: {exc}") from None
    config.snapshot_every = int(raw.get("snapshot_every", config.snapshot_every))
    config.tick_interval_s = float(raw.get("tick_interval_s", config.tick_interval_s))
    config.probe_interval_s = float(raw.get("probe_interval_s", config.probe_interval_s))
    if "backoff" in raw:
        b = raw["backoff"]
        config.backoff = BackoffPolicy(
            base_s=float(b.get("base_s", 2.0)),
            factor=float(b.get("factor", 2.0)),
            cap_s=float(b.get("cap_s", 300.0)),
            jitter=float(b.get("jitter", 0.2)),
        )
    if "sinks" in raw:
        config.sinks = {}
        for s in raw["sinks"]:
            desc = SinkDescriptor(
                sink_id=s["sink_id"],
                endpoint=s.get("endpoint", ""),
                max_post_length=s.get("max_post_length"),
                supports_lookup=bool(s.get("supports_lookup", False)),
            )
            config.sinks[desc.sink_id] = desc
            if "adapter" in s:
                config.sink_adapters[desc.sink_id] = s["adapter"]
        validate_registry(config.sinks)
    if "connectivity" in raw:
        c = raw["connectivity"]
        config.connectivity_mode = c.get("mode", "always_up")
        config.connectivity_script = c.get("script")
    config.bind_host = raw.get("bind_host", config.bind_host)
    config.bind_port = int(raw.get("bind_port", config.bind_port))
    return config


def build_connectivity(config: AppConfig) -> ConnectivityProvider:
    sink_ids = list(config.sinks)
    if config.connectivity_mode == "always_up":
        return always_up(sink_ids)
    if config.connectivity_mode == "always_down":
        return always_down(sink_ids)
    if config.connectivity_mode == "script":
        if not config.connectivity_script:
            raise ValidationError("connectivity mode 'script' needs a script path")
        script_path = config.data_dir / config.connectivity_script
        return ScriptedConnectivity.from_text(
            script_path.read_text(encoding="utf-8"), sink_ids
        )
    raise ValidationError(f"unknown connectivity mode {config.connectivity_mode!r}")


def build_adapters(config: AppConfig) -> dict[str, SinkAdapter]:
    adapters: dict[str, SinkAdapter] = {}
    for sink_id, desc in config.sinks.items():
        kind = config.sink_adapters.get(sink_id, "file")
        if kind == "memory":
            adapters[sink_id] = MemorySink(sink_id=sink_id, dedupe=desc.supports_lookup)
        elif kind == "file":
            path = config.data_dir / "sinks" / f"{sink_id}.log"
            adapters[sink_id] = FileSink(sink_id, path, dedupe=desc.supports_lookup)
        else:
            raise ValidationError(f"unknown sink adapter kind {kind!r} for {sink_id}")
    return adapters


@dataclass
class Runtime:
    """Everything one process needs: store, engine, connectivity, config."""

    config: AppConfig
    store: FieldStore
    engine: SyncEngine
    connectivity: ConnectivityProvider
    clock: Clock

    def tick_now(self):
        return self.engine.sync_tick(self.connectivity, self.clock())

    def close(self) -> None:
        self.store.close()


def build_runtime(
    data_dir: Path | str,
    clock: Clock = system_clock,
    fsync: bool = True,
    rng: random.Random | None = None,
) -> Runtime:
    config = load_config(data_dir)
    store = FieldStore(
        config.data_dir,
        clock=clock,
        snapshot_every=config.snapshot_every,
        fsync=fsync,
        registered_sinks=frozenset(config.sinks),
    )
    engine = SyncEngine(
        store,
        registry=config.sinks,
        adapters=build_adapters(config),
        backoff=config.backoff,
        rng=rng,
    )
    return Runtime(
        config=config,
        store=store,
        engine=engine,
        connectivity=build_connectivity(config),
        clock=clock,
    )
