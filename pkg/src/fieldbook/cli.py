"""Command line surface: every operation reachable without the service.

Tables can be addressed by id or by unique title. Commands exit 0 on
success and nonzero with a one-line diagnostic on stderr otherwise.
``feed``, ``sync status``, ``table list/show`` and ``harvest`` take
``--json`` for machine-readable output.
"""
from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click

from .config import build_runtime, load_config
from .errors import FieldbookError
from .export import export_table
from .harvest import (
    HARVEST_COLUMNS,
    HarvestSpec,
    harvest as run_harvest,
    harvest_to_table,
    read_corpus,
)
from .model import AnnotationKind, FeedFilter, GeoSource, GeoTag, Scope, ScopeLevel
from .sync import DELIVERED
from .wire import annotation_to_dict, entry_to_dict, parse_ts, schema_to_dict

DEFAULT_DATA_DIR = "fieldbook_data"


def _fail_cleanly(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FieldbookError as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


@click.group()
@click.option(
    "--data-dir",
    envvar="FIELDBOOK_DATA_DIR",
    default=DEFAULT_DATA_DIR,
    show_default=True,
    help="Directory holding tables, journal and sink logs.",
)
@click.pass_context
def main(ctx: click.Context, data_dir: str):
    """Field data collection: tables, notes, offline-first sync."""
    ctx.ensure_object(dict)
    ctx.obj["data_dir"] = Path(data_dir)


def _runtime(ctx: click.Context):
    if "runtime" not in ctx.obj:
        runtime = build_runtime(ctx.obj["data_dir"])
        ctx.obj["runtime"] = runtime
        # snapshot on exit so the per-table XML files are always current
        ctx.call_on_close(runtime.close)
    return ctx.obj["runtime"]


def _parse_column(spec: str) -> tuple[str, str]:
    name, sep, vtype = spec.partition(":")
    return (name, vtype if sep else "text")


def _geotag_from_flags(lat, lon, location_description) -> GeoTag | None:
    if location_description:
        return GeoTag(
            source=GeoSource.MANUAL_DESCRIPTION,
            latitude=lat,
            longitude=lon,
            description=location_description,
        )
    if lat is not None or lon is not None:
        return GeoTag(source=GeoSource.DEVICE, latitude=lat, longitude=lon)
    return None


# -- table ----------------------------------------------------------------


@main.group()
def table():
    """Create, list and inspect data collection tables."""


@table.command("create")
@click.option("--title", required=True)
@click.option("--author", required=True)
@click.option("--column", "columns", multiple=True, help="NAME or NAME:TYPE (text, number, boolean, timestamp).")
@click.pass_context
@_fail_cleanly
def table_create(ctx, title, author, columns):
    runtime = _runtime(ctx)
    schema = runtime.store.create_table(title, [_parse_column(c) for c in columns], author)
    click.echo(schema.table_id)


@table.command("list")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_fail_cleanly
def table_list(ctx, as_json):
    runtime = _runtime(ctx)
    schemas = runtime.store.tables()
    if as_json:
        click.echo(json.dumps([schema_to_dict(s) for s in schemas], indent=2))
        return
    for s in schemas:
        document = runtime.store.document(s.table_id)
        click.echo(
            f"{s.table_id}  {s.title!r}  v{s.schema_version}  "
            f"{len(document.entries)} entries, {len(document.annotations)} notes"
        )


@table.command("show")
@click.argument("ref")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_fail_cleanly
def table_show(ctx, ref, as_json):
    runtime = _runtime(ctx)
    document = runtime.store.resolve_table(ref)
    if as_json:
        click.echo(
            json.dumps(
                {
                    "schema": schema_to_dict(document.schema),
                    "entries": [entry_to_dict(e) for e in document.entries],
                    "annotations": [annotation_to_dict(a) for a in document.annotations],
                },
                indent=2,
            )
        )
        return
    s = document.schema
    click.echo(f"{s.title} ({s.table_id}) v{s.schema_version} by {s.created_by}")
    names = [c.name for c in s.columns]
    click.echo("columns: " + (", ".join(f"{c.name}:{c.value_type.value}" for c in s.columns) or "(none)"))
    for e in document.entries:
        cells = ", ".join(f"{n}={e.values[n]}" for n in names if n in e.values)
        click.echo(f"  row {e.row_index}: {cells}")
    click.echo(f"{len(document.annotations)} notes")


# -- column / entry / note -------------------------------------------------


@main.group()
def column():
    """Evolve a table's schema."""


@column.command("add")
@click.option("--table", "ref", required=True)
@click.option("--name", required=True)
@click.option("--type", "value_type", default="text", show_default=True)
@click.pass_context
@_fail_cleanly
def column_add(ctx, ref, name, value_type):
    runtime = _runtime(ctx)
    document = runtime.store.resolve_table(ref)
    schema = runtime.store.add_column(document.table_id, name, value_type)
    click.echo(f"{schema.table_id} now v{schema.schema_version}")


@main.group()
def entry():
    """Record data points."""


@entry.command("add")
@click.option("--table", "ref", required=True)
@click.option("--author", required=True)
@click.option("--value", "values", multiple=True, help="COLUMN=VALUE, repeatable.")
@click.option("--lat", type=float, default=None)
@click.option("--lon", type=float, default=None)
@click.option("--location-description", default=None)
@click.pass_context
@_fail_cleanly
def entry_add(ctx, ref, author, values, lat, lon, location_description):
    runtime = _runtime(ctx)
    document = runtime.store.resolve_table(ref)
    parsed = {}
    for pair in values:
        name, sep, raw = pair.partition("=")
        if not sep:
            raise click.ClickException(f"--value needs COLUMN=VALUE, got {pair!r}")
        parsed[name] = raw
    entry = runtime.store.add_entry(
        document.table_id, parsed, author,
        geotag=_geotag_from_flags(lat, lon, location_description),
    )
    click.echo(entry.entry_id)


@main.group()
def note():
    """Contextual annotations bound to tables, rows, columns or cells."""


@note.command("add")
@click.option("--table", "ref", required=True)
@click.option("--text", required=True)
@click.option("--author", required=True)
@click.option("--row", type=int, default=None, help="Bind to this row.")
@click.option("--column", "column_name", default=None, help="Bind to this column.")
@click.option("--kind", type=click.Choice([k.value for k in AnnotationKind]), default=None)
@click.option("--public/--private", "public", default=None)
@click.option("--sink", "sinks", multiple=True, help="Extra sink, repeatable.")
@click.option("--effective-at", default=None, help="Override the effective ISO-8601 time.")
@click.option("--lat", type=float, default=None)
@click.option("--lon", type=float, default=None)
@click.option("--location-description", default=None)
@click.pass_context
@_fail_cleanly
def note_add(ctx, ref, text, author, row, column_name, kind, public, sinks,
             effective_at, lat, lon, location_description):
    runtime = _runtime(ctx)
    document = runtime.store.resolve_table(ref)
    if row is not None and column_name is not None:
        level = ScopeLevel.CELL
    elif row is not None:
        level = ScopeLevel.ROW
    elif column_name is not None:
        level = ScopeLevel.COLUMN
    else:
        level = ScopeLevel.TABLE
    scope = Scope(level=level, table_id=document.table_id, row_index=row, column_name=column_name)
    visibility = None if public is None else ("public" if public else "private")
    annotation = runtime.store.annotate(
        scope,
        text,
        author,
        effective_at=parse_ts(effective_at) if effective_at else None,
        geotag=_geotag_from_flags(lat, lon, location_description),
        kind=kind,
        visibility=visibility,
        extra_sinks=frozenset(sinks),
    )
    click.echo(annotation.annotation_id)


# -- feed -------------------------------------------------------------------


@main.command("feed")
@click.option("--table", "ref", default=None)
@click.option("--geotagged-only", is_flag=True)
@click.option("--kind", type=click.Choice([k.value for k in AnnotationKind]), default=None)
@click.option("--author", default=None)
@click.option("--since", default=None, help="ISO-8601 lower bound on effective time.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_fail_cleanly
def feed(ctx, ref, geotagged_only, kind, author, since, as_json):
    """Recent annotations, newest effective time first."""
    runtime = _runtime(ctx)
    table_id = runtime.store.resolve_table(ref).table_id if ref else None
    annotations = runtime.store.feed(
        table_id,
        FeedFilter(
            geotagged_only=geotagged_only,
            kind=AnnotationKind(kind) if kind else None,
            author=author,
            since=parse_ts(since) if since else None,
        ),
    )
    if as_json:
        click.echo(json.dumps([annotation_to_dict(a) for a in annotations], indent=2))
        return
    for a in annotations:
        geo = " @geo" if a.geotag else ""
        click.echo(
            f"{a.effective_at.isoformat()}  [{a.kind.value}/{a.visibility.value}]"
            f" {a.author}: {a.text}{geo}"
        )


# -- sync ---------------------------------------------------------------------


@main.group()
def sync():
    """Push queued items to sinks and inspect delivery state."""


@sync.command("run-once")
@click.pass_context
@_fail_cleanly
def sync_run_once(ctx):
    runtime = _runtime(ctx)
    attempts = runtime.tick_now()
    delivered = sum(1 for a in attempts if a.outcome == DELIVERED)
    status = runtime.engine.sync_status(runtime.clock())
    pending = sum(s.pending for s in status.per_sink.values())
    click.echo(f"{delivered} delivered, {pending} pending")


@sync.command("status")
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_fail_cleanly
def sync_status(ctx, as_json):
    runtime = _runtime(ctx)
    status = runtime.engine.sync_status(runtime.clock())
    if as_json:
        from .service import _status_dict

        click.echo(json.dumps(_status_dict(runtime), indent=2))
        return
    for sink_id, s in status.per_sink.items():
        click.echo(
            f"{sink_id}: {s.pending} pending, {s.in_flight} in flight, "
            f"{s.delivered} delivered, {s.failed_permanent} failed"
        )
    if status.oldest_pending_age_s is not None:
        click.echo(f"oldest pending: {status.oldest_pending_age_s:.0f}s")


@sync.command("daemon")
@click.option("--interval", type=float, default=None, help="Seconds between ticks.")
@click.option("--max-ticks", type=int, default=None, hidden=True)
@click.pass_context
@_fail_cleanly
def sync_daemon(ctx, interval, max_ticks):
    """Run ticks forever at the configured interval."""
    runtime = _runtime(ctx)
    period = interval if interval is not None else runtime.config.tick_interval_s
    ticks = 0
    while max_ticks is None or ticks < max_ticks:
        runtime.tick_now()
        ticks += 1
        if max_ticks is not None and ticks >= max_ticks:
            break
        time.sleep(period)
    status = runtime.engine.sync_status(runtime.clock())
    pending = sum(s.pending for s in status.per_sink.values())
    click.echo(f"stopped after {ticks} ticks, {pending} pending")


@sync.command("re-enqueue-failed")
@click.pass_context
@_fail_cleanly
def sync_re_enqueue(ctx):
    runtime = _runtime(ctx)
    click.echo(f"{runtime.engine.re_enqueue_failed()} items reset to pending")


# -- harvest / export -----------------------------------------------------------


@main.command("harvest")
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--hashtag", "hashtags", multiple=True)
@click.option("--keyword", "keywords", multiple=True)
@click.option("--require-geotag", is_flag=True)
@click.option("--table", "ref", default=None, help="Append matches to this table.")
@click.option("--create-table", "new_title", default=None, help="Create a harvest table first.")
@click.option("--author", default="harvest", show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_fail_cleanly
def harvest_cmd(ctx, corpus, hashtags, keywords, require_geotag, ref, new_title, author, as_json):
    """Filter a microblog corpus by hashtags/keywords into observations."""
    runtime = _runtime(ctx)
    posts = read_corpus(Path(corpus))
    spec = HarvestSpec(
        hashtags=frozenset(hashtags),
        keywords=frozenset(keywords),
        require_geotag=require_geotag,
    )
    observations = run_harvest(posts, spec)
    table_id = None
    if new_title:
        table_id = runtime.store.create_table(new_title, list(HARVEST_COLUMNS), author).table_id
    elif ref:
        table_id = runtime.store.resolve_table(ref).table_id
    report = None
    if table_id:
        report = harvest_to_table(runtime.store, observations, table_id)
    if as_json:
        out = {
            "matched": len(observations),
            "post_ids": [o.post_id for o in observations],
        }
        if report:
            out.update(
                table_id=table_id, added=report.added,
                skipped_duplicates=report.skipped_duplicates,
            )
        click.echo(json.dumps(out, indent=2))
        return
    click.echo(f"{len(observations)} of {len(posts)} posts matched")
    if report:
        click.echo(f"{report.added} added to {table_id}, {report.skipped_duplicates} duplicates skipped")


@main.command("export")
@click.option("--table", "ref", required=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.pass_context
@_fail_cleanly
def export_cmd(ctx, ref, out):
    """Write a table and its notes as a two-sheet spreadsheet file."""
    runtime = _runtime(ctx)
    document = runtime.store.resolve_table(ref)
    path = export_table(runtime.store, document.table_id, Path(out))
    click.echo(str(path))


# -- serve ------------------------------------------------------------------


@main.command("serve")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--ui-dir", envvar="FIELDBOOK_UI_DIR", default=None,
              type=click.Path(file_okay=False), help="Static UI build to mount at /ui.")
@click.option("--sync-daemon/--no-sync-daemon", default=True, show_default=True)
@click.pass_context
@_fail_cleanly
def serve_cmd(ctx, host, port, ui_dir, sync_daemon):
    """Run the HTTP service (binds localhost unless configured otherwise)."""
    from .service import serve

    runtime = _runtime(ctx)
    config = load_config(ctx.obj["data_dir"])
    serve(
        runtime,
        host=host or config.bind_host,
        port=port or config.bind_port,
        ui_dir=Path(ui_dir) if ui_dir else None,
        sync_daemon=sync_daemon,
    )


if __name__ == "__main__":
    main()
