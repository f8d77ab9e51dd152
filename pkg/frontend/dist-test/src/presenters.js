/**
 * View logic, DOM-free. Each presenter wraps one screen's state and
 * actions; the render layer binds them to elements. Presenters hold no
 * state the service does not — every view refreshes from the API, so a
 * page reload reproduces exactly what the service knows.
 */
import { chunkCounterLabel } from "./chunk.js";
export class TableAuthoring {
    constructor(api) {
        this.api = api;
        this.columns = [];
    }
    addColumnDraft(name, valueType) {
        this.columns.push({ name: name.trim(), value_type: valueType });
    }
    removeColumnDraft(index) {
        this.columns.splice(index, 1);
    }
    async create(title, author) {
        const schema = await this.api.createTable(title.trim(), author.trim(), this.columns);
        this.columns = [];
        return schema;
    }
    async list() {
        return (await this.api.listTables()).tables;
    }
}
export class DataEntryGrid {
    constructor(api, tableId) {
        this.api = api;
        this.tableId = tableId;
        this.schema = null;
        this.entries = [];
        this.selection = {};
    }
    async refresh() {
        const table = await this.api.getTable(this.tableId);
        this.schema = table.schema;
        this.entries = table.entries;
    }
    select(selection) {
        this.selection = selection;
    }
    /** The note scope the current selection carries into the note form. */
    scopeForSelection() {
        const { rowIndex, columnName } = this.selection;
        if (rowIndex !== undefined && columnName !== undefined)
            return { level: "cell", row_index: rowIndex, column_name: columnName };
        if (rowIndex !== undefined)
            return { level: "row", row_index: rowIndex };
        if (columnName !== undefined)
            return { level: "column", column_name: columnName };
        return { level: "table" };
    }
    async addEntry(author, values, geotag) {
        const entry = await this.api.addEntry(this.tableId, author, values, geotag);
        await this.refresh();
        return entry;
    }
    async addColumn(name, valueType) {
        const schema = await this.api.addColumn(this.tableId, name, valueType);
        await this.refresh();
        return schema;
    }
}
export class NoteForm {
    constructor(api, locate, scope, author, now = () => new Date()) {
        this.api = api;
        this.locate = locate;
        this.scope = scope;
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
    setText(text) {
        this.state.text = text;
        this.updateCounter();
    }
    setPublic(isPublic) {
        this.state.isPublic = isPublic;
        this.updateCounter();
    }
    updateCounter() {
        this.state.counter = chunkCounterLabel(this.state.text.length, this.state.isPublic);
    }
    /** "Geo-tag this": try the device; fall back to a description field. */
    async requestGeotag() {
        this.state.geotagRequested = true;
        const fix = await this.locate();
        if (fix) {
            this.state.fix = fix;
            this.state.geotagMode = "device";
        }
        else {
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
    buildGeotag() {
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
    draft() {
        const sinks = [];
        if (this.state.isPublic)
            sinks.push("public_microblog");
        if (this.state.extraSinks.raw_repo)
            sinks.push("raw_repo");
        if (this.state.extraSinks.context_repo)
            sinks.push("context_repo");
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
    async submit(tableId) {
        return this.api.addNote(tableId, this.draft());
    }
}
export class FeedView {
    constructor(api) {
        this.api = api;
        this.annotations = [];
        this.filters = {};
    }
    async refresh() {
        this.annotations = (await this.api.feed(this.filters)).annotations;
    }
    /** Optimistic UI: show the new note immediately, then reconcile. */
    insertOptimistic(note) {
        this.annotations = [note, ...this.annotations.filter((a) => a.annotation_id !== note.annotation_id)];
    }
    async reconcile() {
        await this.refresh();
    }
}
function describeRow(sink, counts) {
    let state = "clear";
    if (counts.failed_permanent > 0)
        state = "attention";
    else if (counts.in_flight > 0)
        state = "draining";
    else if (counts.pending > 0)
        state = "offline-queued";
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
    constructor(api) {
        this.api = api;
        this.state = {
            rows: [],
            totalPending: 0,
            oldestPendingAge: "—",
            lastProbe: "never",
            flushReport: "",
        };
    }
    apply(status) {
        const rows = Object.entries(status.per_sink).map(([sink, counts]) => describeRow(sink, counts));
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
