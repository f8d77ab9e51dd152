/**
 * View logic, DOM-free. Each presenter wraps one screen's state and
 * actions; the render layer binds them to elements. Presenters hold no
 * state the service does not — every view refreshes from the API, so a
 * page reload reproduces exactly what the service knows.
 */

import {
  Annotation,
  Entry,
  FieldbookApi,
  GeoTag,
  NoteDraft,
  Scope,
  SyncStatus,
  TableListing,
  TableSchema,
} from "./api.js";
import { chunkCounterLabel } from "./chunk.js";
import { LocationProvider } from "./geo.js";

// -- table authoring ---------------------------------------------------

export interface ColumnDraft {
  name: string;
  value_type: string;
}

export class TableAuthoring {
  columns: ColumnDraft[] = [];

  constructor(private api: FieldbookApi) {}

  addColumnDraft(name: string, valueType: string) {
    this.columns.push({ name: name.trim(), value_type: valueType });
  }

  removeColumnDraft(index: number) {
    this.columns.splice(index, 1);
  }

  async create(title: string, author: string): Promise<TableSchema> {
    const schema = await this.api.createTable(title.trim(), author.trim(), this.columns);
    this.columns = [];
    return schema;
  }

  async list(): Promise<TableListing[]> {
    return (await this.api.listTables()).tables;
  }
}

// -- data entry grid -----------------------------------------------------

export interface CellSelection {
  rowIndex?: number;
  columnName?: string;
}

export class DataEntryGrid {
  schema: TableSchema | null = null;
  entries: Entry[] = [];
  selection: CellSelection = {};

  constructor(private api: FieldbookApi, readonly tableId: string) {}

  async refresh() {
    const table = await this.api.getTable(this.tableId);
    this.schema = table.schema;
    this.entries = table.entries;
  }

  select(selection: CellSelection) {
    this.selection = selection;
  }

  /** The note scope the current selection carries into the note form. */
  scopeForSelection(): Scope {
    const { rowIndex, columnName } = this.selection;
    if (rowIndex !== undefined && columnName !== undefined)
      return { level: "cell", row_index: rowIndex, column_name: columnName };
    if (rowIndex !== undefined) return { level: "row", row_index: rowIndex };
    if (columnName !== undefined) return { level: "column", column_name: columnName };
    return { level: "table" };
  }

  async addEntry(author: string, values: Record<string, unknown>, geotag?: GeoTag) {
    const entry = await this.api.addEntry(this.tableId, author, values, geotag);
    await this.refresh();
    return entry;
  }

  async addColumn(name: string, valueType: string) {
    const schema = await this.api.addColumn(this.tableId, name, valueType);
    await this.refresh();
    return schema;
  }
}

// -- note form -------------------------------------------------------------

export interface NoteFormState {
  text: string;
  author: string;
  effectiveAt: string; // ISO, auto-filled, editable
  geotagRequested: boolean;
  geotagMode: "device" | "manual" | "off";
  fix: { latitude: number; longitude: number } | null;
  locationDescription: string;
  kind: string;
  isPublic: boolean;
  extraSinks: { raw_repo: boolean; context_repo: boolean };
  counter: string;
}

export class NoteForm {
  state: NoteFormState;

  constructor(
    private api: FieldbookApi,
    private locate: LocationProvider,
    readonly scope: Scope,
    author: string,
    now: () => Date = () => new Date(),
  ) {
    this.state = {
      text: "",
      author,
      effectiveAt: now().toISOString(), // auto-populated; user may alter
      geotagRequested: false,
      geotagMode: "off",
      fix: null,
      locationDescription: "",
      kind: "note",
      isPublic: false, // private unless explicitly toggled
      extraSinks: { raw_repo: false, context_repo: false },
      counter: chunkCounterLabel(0, false),
    };
  }

  setText(text: string) {
    this.state.text = text;
    this.updateCounter();
  }

  setPublic(isPublic: boolean) {
    this.state.isPublic = isPublic;
    this.updateCounter();
  }

  private updateCounter() {
    this.state.counter = chunkCounterLabel(this.state.text.length, this.state.isPublic);
  }

  /** "Geo-tag this": try the device; fall back to a description field. */
  async requestGeotag(): Promise<void> {
    this.state.geotagRequested = true;
    const fix = await this.locate();
    if (fix) {
      this.state.fix = fix;
      this.state.geotagMode = "device";
    } else {
      this.state.fix = null;
      this.state.geotagMode = "manual";
    }
  }

  clearGeotag() {
    this.state.geotagRequested = false;
    this.state.geotagMode = "off";
    this.state.fix = null;
    this.state.locationDescription = "";
  }

  private buildGeotag(): GeoTag | undefined {
    if (this.state.geotagMode === "device" && this.state.fix)
      return {
        source: "device",
        latitude: this.state.fix.latitude,
        longitude: this.state.fix.longitude,
      };
    if (this.state.geotagMode === "manual" && this.state.locationDescription.trim())
      return { source: "manual_description", description: this.state.locationDescription.trim() };
    return undefined;
  }

  draft(): NoteDraft {
    const sinks: string[] = [];
    if (this.state.isPublic) sinks.push("public_microblog");
    if (this.state.extraSinks.raw_repo) sinks.push("raw_repo");
    if (this.state.extraSinks.context_repo) sinks.push("context_repo");
    return {
      text: this.state.text,
      author: this.state.author,
      scope: this.scope,
      effective_at: this.state.effectiveAt,
      geotag: this.buildGeotag(),
      kind: this.state.kind,
      visibility: this.state.isPublic ? "public" : "private",
      extra_sinks: sinks,
    };
  }

  async submit(tableId: string): Promise<Annotation> {
    return this.api.addNote(tableId, this.draft());
  }
}

// -- feed -------------------------------------------------------------------

export interface FeedFilters {
  geotagged_only?: boolean;
  kind?: string;
  author?: string;
  table_id?: string;
}

export class FeedView {
  annotations: Annotation[] = [];
  filters: FeedFilters = {};

  constructor(private api: FieldbookApi) {}

  async refresh() {
    this.annotations = (await this.api.feed(this.filters)).annotations;
  }

  /** Optimistic UI: show the new note immediately, then reconcile. */
  insertOptimistic(note: Annotation) {
    this.annotations = [note, ...this.annotations.filter(
      (a) => a.annotation_id !== note.annotation_id,
    )];
  }

  async reconcile() {
    await this.refresh();
  }
}

// -- sync panel ----------------------------------------------------------------

export interface SinkRow {
  sink: string;
  pending: number;
  inFlight: number;
  delivered: number;
  failed: number;
  state: "offline-queued" | "draining" | "clear" | "attention";
}

export interface SyncPanelState {
  rows: SinkRow[];
  totalPending: number;
  oldestPendingAge: string;
  lastProbe: string;
  flushReport: string;
}

function describeRow(sink: string, counts: {
  pending: number; in_flight: number; delivered: number; failed_permanent: number;
}): SinkRow {
  let state: SinkRow["state"] = "clear";
  if (counts.failed_permanent > 0) state = "attention";
  else if (counts.in_flight > 0) state = "draining";
  else if (counts.pending > 0) state = "offline-queued";
  return {
    sink,
    pending: counts.pending,
    inFlight: counts.in_flight,
    delivered: counts.delivered,
    failed: counts.failed_permanent,
    state,
  };
}

export class SyncPanel {
  state: SyncPanelState = {
    rows: [],
    totalPending: 0,
    oldestPendingAge: "—",
    lastProbe: "never",
    flushReport: "",
  };

  constructor(private api: FieldbookApi) {}

  private apply(status: SyncStatus) {
    const rows = Object.entries(status.per_sink).map(([sink, counts]) =>
      describeRow(sink, counts),
    );
    this.state.rows = rows;
    this.state.totalPending = rows.reduce((sum, r) => sum + r.pending, 0);
    this.state.oldestPendingAge =
      status.oldest_pending_age_s === null ? "—" : `${Math.round(status.oldest_pending_age_s)}s`;
    this.state.lastProbe = status.last_probe
      ? Object.entries(status.last_probe)
          .map(([sink, up]) => `${sink}:${up ? "up" : "down"}`)
          .join(" ")
      : "never";
  }

  async refresh() {
    this.apply(await this.api.syncStatus());
  }

  async flushNow() {
    const result = await this.api.syncFlush();
    this.apply(result.status);
    this.state.flushReport =
      result.delivered > 0
        ? `${result.delivered} delivered`
        : this.state.totalPending > 0
          ? `still offline — ${this.state.totalPending} queued locally`
          : "nothing to push";
  }

  async reEnqueueFailed() {
    const result = await this.api.reEnqueueFailed();
    this.apply(result.status);
    this.state.flushReport = `${result.reset} failed items re-queued`;
  }
}
