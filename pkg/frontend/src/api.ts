/**
 * Typed client over the fieldbook HTTP API.
 * All state lives on the service; this layer never caches.
 */

export interface ColumnSpec {
  name: string;
  value_type: string;
  added_at_version: number;
}

export interface TableSchema {
  table_id: string;
  title: string;
  schema_version: number;
  created_by: string;
  created_at: string;
  columns: ColumnSpec[];
}

export interface TableListing extends TableSchema {
  entry_count: number;
  annotation_count: number;
}

export interface GeoTag {
  source: "device" | "manual_description";
  latitude?: number;
  longitude?: number;
  description?: string;
}

export interface Entry {
  entry_id: string;
  row_index: number;
  author: string;
  captured_at: string;
  values: Record<string, unknown>;
  geotag?: GeoTag;
}

export interface Scope {
  level: "table" | "row" | "column" | "cell";
  row_index?: number | null;
  column_name?: string | null;
}

export interface Annotation {
  annotation_id: string;
  author: string;
  captured_at: string;
  effective_at: string;
  text: string;
  scope: Scope & { table_id: string };
  sequence: number;
  kind: string;
  visibility: "private" | "public";
  extra_sinks: string[];
  geotag?: GeoTag;
}

export interface SinkCounts {
  pending: number;
  in_flight: number;
  delivered: number;
  failed_permanent: number;
}

export interface SyncStatus {
  per_sink: Record<string, SinkCounts>;
  oldest_pending_age_s: number | null;
  last_probe: Record<string, boolean> | null;
  last_tick_at: string | null;
  ticks_skipped: number;
}

export interface NoteDraft {
  text: string;
  author: string;
  scope: Scope;
  effective_at?: string;
  geotag?: GeoTag;
  kind?: string;
  visibility?: string;
  extra_sinks?: string[];
}

export class ApiError extends Error {
  constructor(message: string, readonly status: number, readonly field?: string) {
    super(message);
  }
}

export class FieldbookApi {
  constructor(private base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.base + path, {
      method,
      headers: body !== undefined ? { "Content-Type": "application/json" } : {},
      body: body !== undefined ? JSON.stringify(body) : undefined,
    });
    if (!response.ok) {
      let message = `${method} ${path} failed (${response.status})`;
      let field: string | undefined;
      try {
        const payload = await response.json();
        message = payload.error?.message ?? message;
        field = payload.error?.field;
      } catch {
        // non-JSON error body; keep the generic message
      }
      throw new ApiError(message, response.status, field);
    }
    return (await response.json()) as T;
  }

  createTable(title: string, author: string, columns: { name: string; value_type: string }[]) {
    return this.request<TableSchema>("POST", "/tables", { title, author, columns });
  }

  listTables() {
    return this.request<{ tables: TableListing[] }>("GET", "/tables");
  }

  getTable(tableId: string) {
    return this.request<{ schema: TableSchema; entries: Entry[]; annotation_count: number }>(
      "GET",
      `/tables/${tableId}`,
    );
  }

  addColumn(tableId: string, name: string, valueType: string) {
    return this.request<TableSchema>("POST", `/tables/${tableId}/columns`, {
      name,
      value_type: valueType,
    });
  }

  addEntry(tableId: string, author: string, values: Record<string, unknown>, geotag?: GeoTag) {
    return this.request<Entry>("POST", `/tables/${tableId}/entries`, {
      author,
      values,
      geotag: geotag ?? null,
    });
  }

  addNote(tableId: string, draft: NoteDraft) {
    return this.request<Annotation>("POST", `/tables/${tableId}/annotations`, draft);
  }

  feed(params: { table_id?: string; geotagged_only?: boolean; kind?: string; author?: string } = {}) {
    const query = new URLSearchParams();
    if (params.table_id) query.set("table_id", params.table_id);
    if (params.geotagged_only) query.set("geotagged_only", "true");
    if (params.kind) query.set("kind", params.kind);
    if (params.author) query.set("author", params.author);
    const suffix = query.toString() ? `?${query}` : "";
    return this.request<{ annotations: Annotation[] }>("GET", `/feed${suffix}`);
  }

  syncStatus() {
    return this.request<SyncStatus>("GET", "/sync/status");
  }

  syncFlush() {
    return this.request<{ attempts: number; delivered: number; status: SyncStatus }>(
      "POST",
      "/sync/flush",
    );
  }

  reEnqueueFailed() {
    return this.request<{ reset: number; status: SyncStatus }>("POST", "/sync/re-enqueue-failed");
  }

  chunkPreview(text: string) {
    return this.request<{ parts: number; max_post_length: number; payload_lengths: number[] }>(
      "POST",
      "/chunk-preview",
      { text },
    );
  }

  exportUrl(tableId: string): string {
    return `${this.base}/tables/${tableId}/export`;
  }
}
