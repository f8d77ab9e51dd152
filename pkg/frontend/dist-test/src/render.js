/**
 * Thin DOM layer over the presenters. No framework: build elements,
 * wire events, re-render on change.
 */
import { FieldbookApi } from "./api.js";
import { DataEntryGrid, FeedView, NoteForm, SyncPanel, TableAuthoring, } from "./presenters.js";
import { browserLocationProvider } from "./geo.js";
const VALUE_TYPES = ["text", "number", "boolean", "timestamp"];
const KINDS = ["note", "event", "instrument_failure"];
function el(tag, attrs = {}, ...children) {
    const node = document.createElement(tag);
    for (const [key, value] of Object.entries(attrs)) {
        if (key === "class")
            node.className = value;
        else
            node.setAttribute(key, value);
    }
    node.append(...children);
    return node;
}
function clear(node) {
    while (node.firstChild)
        node.removeChild(node.firstChild);
}
export class App {
    constructor(root, api = new FieldbookApi(""), locate = browserLocationProvider()) {
        this.locate = locate;
        this.grid = null;
        this.author = "field-team";
        this.root = root;
        this.api = api;
        this.authoring = new TableAuthoring(api);
        this.feed = new FeedView(api);
        this.panel = new SyncPanel(api);
        this.status = el("div", { class: "statusline" });
    }
    async start() {
        await this.showTables();
    }
    fail(error) {
        this.status.textContent = error instanceof Error ? error.message : String(error);
        this.status.className = "statusline error";
    }
    note(message) {
        this.status.textContent = message;
        this.status.className = "statusline";
    }
    // -- tables screen -----------------------------------------------
    async showTables() {
        let tables = [];
        try {
            tables = await this.authoring.list();
        }
        catch (error) {
            this.fail(error);
        }
        clear(this.root);
        const list = el("div", { class: "table-list" });
        for (const t of tables) {
            const open = el("button", {}, `${t.title} — v${t.schema_version}, ${t.entry_count} entries, ${t.annotation_count} notes`);
            open.addEventListener("click", () => this.showGrid(t.table_id));
            list.append(el("div", { class: "table-row" }, open));
        }
        if (!tables.length)
            list.append(el("p", { class: "hint" }, "No tables yet. Author one before heading to the field."));
        const authorInput = el("input", { value: this.author, placeholder: "your name" });
        authorInput.addEventListener("change", () => (this.author = authorInput.value));
        this.root.append(el("h1", {}, "fieldbook"), this.status, el("label", {}, "Working as: ", authorInput), el("h2", {}, "Tables"), list, this.renderAuthoringForm(), el("h2", {}, "Cross-table feed"), await this.renderFeed(), el("h2", {}, "Sync"), await this.renderSyncPanel());
    }
    renderAuthoringForm() {
        const title = el("input", { placeholder: "table title" });
        const colName = el("input", { placeholder: "column name" });
        const colType = el("select", {});
        for (const vt of VALUE_TYPES)
            colType.append(el("option", { value: vt }, vt));
        const drafts = el("ul", { class: "column-drafts" });
        const redraw = () => {
            clear(drafts);
            this.authoring.columns.forEach((c, i) => {
                const remove = el("button", { type: "button" }, "remove");
                remove.addEventListener("click", () => {
                    this.authoring.removeColumnDraft(i);
                    redraw();
                });
                drafts.append(el("li", {}, `${c.name}: ${c.value_type} `, remove));
            });
        };
        const addColumn = el("button", { type: "button" }, "add column");
        addColumn.addEventListener("click", () => {
            if (!colName.value.trim())
                return;
            this.authoring.addColumnDraft(colName.value, colType.value);
            colName.value = "";
            redraw();
        });
        const create = el("button", { type: "button", class: "primary" }, "create table");
        create.addEventListener("click", async () => {
            try {
                const schema = await this.authoring.create(title.value, this.author);
                this.note(`created ${schema.title}`);
                await this.showGrid(schema.table_id);
            }
            catch (error) {
                this.fail(error);
            }
        });
        return el("fieldset", { class: "authoring" }, el("legend", {}, "Author a new table"), title, el("div", {}, colName, colType, addColumn), drafts, create);
    }
    // -- grid screen ----------------------------------------------------
    async showGrid(tableId) {
        this.grid = new DataEntryGrid(this.api, tableId);
        try {
            await this.grid.refresh();
        }
        catch (error) {
            this.fail(error);
            return;
        }
        await this.redrawGrid();
    }
    async redrawGrid() {
        const grid = this.grid;
        const schema = grid.schema;
        clear(this.root);
        const back = el("button", {}, "← tables");
        back.addEventListener("click", () => this.showTables());
        const table = el("table", { class: "grid" });
        const headerRow = el("tr", {}, el("th", {}, "#"));
        for (const column of schema.columns) {
            const th = el("th", {}, `${column.name}\n(${column.value_type})`);
            th.addEventListener("click", () => {
                grid.select({ columnName: column.name });
                this.openNoteForm();
            });
            headerRow.append(th);
        }
        table.append(headerRow);
        for (const entry of grid.entries) {
            const tr = el("tr", {});
            const rowHead = el("td", { class: "rowhead" }, String(entry.row_index));
            rowHead.addEventListener("click", () => {
                grid.select({ rowIndex: entry.row_index });
                this.openNoteForm();
            });
            tr.append(rowHead);
            for (const column of schema.columns) {
                const value = entry.values[column.name];
                const td = el("td", {}, value === undefined ? "" : String(value));
                td.addEventListener("click", () => {
                    grid.select({ rowIndex: entry.row_index, columnName: column.name });
                    this.openNoteForm();
                });
                tr.append(td);
            }
            table.append(tr);
        }
        // entry form: one input per column, geotag optional
        const inputs = new Map();
        const entryForm = el("div", { class: "entry-form" });
        for (const column of schema.columns) {
            const input = el("input", { placeholder: `${column.name} (${column.value_type})` });
            inputs.set(column.name, input);
            entryForm.append(input);
        }
        const geoBox = el("input", { type: "checkbox", id: "entry-geo" });
        const addEntry = el("button", { class: "primary" }, "add entry");
        addEntry.addEventListener("click", async () => {
            const values = {};
            for (const [name, input] of inputs) {
                if (input.value !== "")
                    values[name] = input.value;
            }
            try {
                let geotag;
                if (geoBox.checked) {
                    const fix = await this.locate();
                    if (fix)
                        geotag = { source: "device", latitude: fix.latitude, longitude: fix.longitude };
                }
                await grid.addEntry(this.author, values, geotag);
                this.note("entry saved, queued for sync");
                await this.redrawGrid();
            }
            catch (error) {
                this.fail(error);
            }
        });
        entryForm.append(el("label", {}, geoBox, " geo-tag this"), addEntry);
        const colName = el("input", { placeholder: "new column" });
        const colType = el("select", {});
        for (const vt of VALUE_TYPES)
            colType.append(el("option", { value: vt }, vt));
        const addColumn = el("button", {}, "add column");
        addColumn.addEventListener("click", async () => {
            try {
                await grid.addColumn(colName.value, colType.value);
                this.note(`column ${colName.value} added`);
                await this.redrawGrid();
            }
            catch (error) {
                this.fail(error);
            }
        });
        const tableNote = el("button", {}, "note on this table");
        tableNote.addEventListener("click", () => {
            grid.select({});
            this.openNoteForm();
        });
        const exportLink = el("a", { href: this.api.exportUrl(grid.tableId), download: "" }, "export spreadsheet");
        this.root.append(back, this.status, el("h1", {}, schema.title), el("p", { class: "hint" }, "Click a cell, row number or column header to attach a note at that scope."), table, el("h2", {}, "Add entry"), entryForm, el("h2", {}, "Add column"), el("div", {}, colName, colType, addColumn), el("div", { class: "actions" }, tableNote, exportLink), el("h2", {}, "Notes on this table"), await this.renderFeed(grid.tableId), el("h2", {}, "Sync"), await this.renderSyncPanel());
    }
    // -- note form -------------------------------------------------------
    openNoteForm() {
        const grid = this.grid;
        const scope = grid.scopeForSelection();
        const form = new NoteForm(this.api, this.locate, scope, this.author);
        const overlay = el("div", { class: "overlay" });
        const describeScope = () => {
            const parts = [`table ${grid.schema.title}`];
            if (scope.row_index != null)
                parts.push(`row ${scope.row_index}`);
            if (scope.column_name != null)
                parts.push(`column ${scope.column_name}`);
            return parts.join(", ");
        };
        const text = el("textarea", { placeholder: "note text (no length cap)" });
        const counter = el("span", { class: "counter" }, form.state.counter);
        text.addEventListener("input", () => {
            form.setText(text.value);
            counter.textContent = form.state.counter;
        });
        const effective = el("input", { value: form.state.effectiveAt });
        effective.addEventListener("change", () => (form.state.effectiveAt = effective.value));
        const kind = el("select", {});
        for (const k of KINDS)
            kind.append(el("option", { value: k }, k));
        kind.addEventListener("change", () => (form.state.kind = kind.value));
        const publicToggle = el("input", { type: "checkbox" });
        publicToggle.addEventListener("change", () => {
            form.setPublic(publicToggle.checked);
            counter.textContent = form.state.counter;
        });
        const rawRepo = el("input", { type: "checkbox" });
        rawRepo.addEventListener("change", () => (form.state.extraSinks.raw_repo = rawRepo.checked));
        const contextRepo = el("input", { type: "checkbox" });
        contextRepo.addEventListener("change", () => (form.state.extraSinks.context_repo = contextRepo.checked));
        const geoRow = el("div", { class: "geo-row" });
        const geoBox = el("input", { type: "checkbox" });
        const geoState = el("span", {}, "");
        const description = el("input", { placeholder: "describe the location", class: "hidden" });
        description.addEventListener("change", () => (form.state.locationDescription = description.value));
        geoBox.addEventListener("change", async () => {
            if (!geoBox.checked) {
                form.clearGeotag();
                geoState.textContent = "";
                description.classList.add("hidden");
                return;
            }
            geoState.textContent = "getting fix…";
            await form.requestGeotag();
            if (form.state.geotagMode === "device" && form.state.fix) {
                geoState.textContent = `${form.state.fix.latitude.toFixed(5)}, ${form.state.fix.longitude.toFixed(5)}`;
                description.classList.add("hidden");
            }
            else {
                // no fix available: fall back to a self-described location
                geoState.textContent = "no fix — describe the location:";
                description.classList.remove("hidden");
            }
        });
        geoRow.append(el("label", {}, geoBox, " Geo-tag this "), geoState, description);
        const save = el("button", { class: "primary" }, "save note");
        save.addEventListener("click", async () => {
            try {
                const annotation = await form.submit(grid.tableId);
                this.feed.insertOptimistic(annotation); // optimistic; reconciled on redraw
                overlay.remove();
                this.note("note saved, queued for sync");
                await this.redrawGrid();
            }
            catch (error) {
                this.fail(error);
                overlay.remove();
            }
        });
        const cancel = el("button", {}, "cancel");
        cancel.addEventListener("click", () => overlay.remove());
        overlay.append(el("div", { class: "note-form" }, el("h2", {}, `New note on ${describeScope()}`), text, counter, el("label", {}, "effective at: ", effective), el("label", {}, "kind: ", kind), el("label", {}, publicToggle, " publish to public microblog"), el("label", {}, rawRepo, " also push to raw-data repository"), el("label", {}, contextRepo, " also push to contextual repository"), geoRow, el("div", { class: "actions" }, save, cancel)));
        this.root.append(overlay);
    }
    // -- feed + sync ------------------------------------------------------
    async renderFeed(tableId) {
        this.feed.filters = { table_id: tableId };
        const container = el("div", { class: "feed" });
        const geotaggedOnly = el("input", { type: "checkbox" });
        const authorFilter = el("input", { placeholder: "author" });
        const kindFilter = el("select", {});
        kindFilter.append(el("option", { value: "" }, "any kind"));
        for (const k of KINDS)
            kindFilter.append(el("option", { value: k }, k));
        const list = el("ul", { class: "feed-list" });
        const redraw = (annotations) => {
            clear(list);
            for (const a of annotations) {
                const geo = a.geotag
                    ? a.geotag.source === "device"
                        ? ` @ ${a.geotag.latitude}, ${a.geotag.longitude}`
                        : ` @ "${a.geotag.description}"`
                    : "";
                list.append(el("li", { class: `feed-item ${a.visibility}` }, el("span", { class: "when" }, a.effective_at), el("span", { class: "who" }, ` ${a.author} `), el("span", { class: "kind" }, `[${a.kind}/${a.visibility}]`), el("div", { class: "text" }, a.text + geo)));
            }
            if (!annotations.length)
                list.append(el("li", { class: "hint" }, "no annotations yet"));
        };
        const refresh = async () => {
            this.feed.filters = {
                table_id: tableId,
                geotagged_only: geotaggedOnly.checked || undefined,
                author: authorFilter.value || undefined,
                kind: kindFilter.value || undefined,
            };
            try {
                await this.feed.refresh();
                redraw(this.feed.annotations);
            }
            catch (error) {
                this.fail(error);
            }
        };
        geotaggedOnly.addEventListener("change", refresh);
        authorFilter.addEventListener("change", refresh);
        kindFilter.addEventListener("change", refresh);
        await refresh();
        container.append(el("div", { class: "feed-filters" }, el("label", {}, geotaggedOnly, " geo-tagged only "), authorFilter, kindFilter), list);
        return container;
    }
    async renderSyncPanel() {
        try {
            await this.panel.refresh();
        }
        catch (error) {
            this.fail(error);
        }
        const container = el("div", { class: "sync-panel" });
        const table = el("table", { class: "sync-table" });
        const redraw = () => {
            clear(table);
            table.append(el("tr", {}, el("th", {}, "sink"), el("th", {}, "pending"), el("th", {}, "delivered"), el("th", {}, "failed"), el("th", {}, "")));
            for (const row of this.panel.state.rows) {
                table.append(el("tr", { class: row.state }, el("td", {}, row.sink), el("td", {}, String(row.pending)), el("td", {}, String(row.delivered)), el("td", {}, String(row.failed)), el("td", { class: "sink-state" }, row.state === "offline-queued" ? "queued locally" : row.state)));
            }
            meta.textContent =
                `oldest pending: ${this.panel.state.oldestPendingAge} · ` +
                    `last probe: ${this.panel.state.lastProbe} · ${this.panel.state.flushReport}`;
        };
        const meta = el("div", { class: "sync-meta" });
        const flush = el("button", {}, "flush now");
        flush.addEventListener("click", async () => {
            try {
                await this.panel.flushNow();
                redraw();
            }
            catch (error) {
                this.fail(error);
            }
        });
        const requeue = el("button", {}, "re-enqueue failed");
        requeue.addEventListener("click", async () => {
            try {
                await this.panel.reEnqueueFailed();
                redraw();
            }
            catch (error) {
                this.fail(error);
            }
        });
        redraw();
        container.append(table, meta, el("div", { class: "actions" }, flush, requeue));
        return container;
    }
}
