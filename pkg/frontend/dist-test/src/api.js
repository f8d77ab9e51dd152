/**
 * Typed client over the fieldbook HTTP API.
 * All state lives on the service; this layer never caches.
 */
export class ApiError extends Error {
    constructor(message, status, field) {
        super(message);
        this.status = status;
        this.field = field;
    }
}
export class FieldbookApi {
    constructor(base = "") {
        this.base = base;
    }
    async request(method, path, body) {
        const response = await fetch(this.base + path, {
            method,
            headers: body !== undefined ? { "Content-Type": "application/json" } : {},
            body: body !== undefined ? JSON.stringify(body) : undefined,
        });
        if (!response.ok) {
            let message = `${method} ${path} failed (${response.status})`;
            let field;
            try {
                const payload = await response.json();
                message = payload.error?.message ?? message;
                field = payload.error?.field;
            }
            catch {
                // non-JSON error body; keep the generic message
            }
            throw new ApiError(message, response.status, field);
        }
        return (await response.json());
    }
    createTable(title, author, columns) {
        return this.request("POST", "/tables", { title, author, columns });
    }
    listTables() {
        return this.request("GET", "/tables");
    }
    getTable(tableId) {
        return this.request("GET", `/tables/${tableId}`);
    }
    addColumn(tableId, name, valueType) {
        return this.request("POST", `/tables/${tableId}/columns`, {
            name,
            value_type: valueType,
        });
    }
    addEntry(tableId, author, values, geotag) {
        return this.request("POST", `/tables/${tableId}/entries`, {
            author,
            values,
            geotag: geotag ?? null,
        });
    }
    addNote(tableId, draft) {
        return this.request("POST", `/tables/${tableId}/annotations`, draft);
    }
    feed(params = {}) {
        const query = new URLSearchParams();
        if (params.table_id)
            query.set("table_id", params.table_id);
        if (params.geotagged_only)
            query.set("geotagged_only", "true");
        if (params.kind)
            query.set("kind", params.kind);
        if (params.author)
            query.set("author", params.author);
        const suffix = query.toString() ? `?${query}` : "";
        return this.request("GET", `/feed${suffix}`);
    }
    syncStatus() {
        return this.request("GET", "/sync/status");
    }
    syncFlush() {
        return this.request("POST", "/sync/flush");
    }
    reEnqueueFailed() {
        return this.request("POST", "/sync/re-enqueue-failed");
    }
    chunkPreview(text) {
        return this.request("POST", "/chunk-preview", { text });
    }
    exportUrl(tableId) {
        return `${this.base}/tables/${tableId}/export`;
    }
}
