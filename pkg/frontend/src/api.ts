/**
 * Typed client for the catalog HTTP API.
 *
 * Every server error arrives as {error, message, ...details} with a
 * meaningful status code; it is re-thrown as ApiError so callers can branch
 * on the same code names the server uses (StaleWrite, NotFound, ...).
 */

export interface ApiConfig {
  api_url: string;
}

export class ApiError extends Error {
  constructor(
    readonly code: string,
    readonly status: number,
    message: string,
    readonly details: Record<string, unknown> = {},
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export interface RecordDoc {
  rid: string;
  values: Record<string, unknown>;
  created_by: string;
  created_at: string;
  modified_at: string;
  revision: number;
  release_state: "pending" | "released";
  deleted: boolean;
}

export interface Envelope<T> {
  data: T[];
  count: number;
  model_version: number;
}

export interface Identity {
  id: string;
  display_name: string;
  roles: string[];
}

export interface QueryOptions {
  filters?: string[];
  join?: string;
  limit?: number;
  offset?: number;
  projection?: string[];
}

export interface QueryPage {
  rows: RecordDoc[];
  count: number;
  modelVersion: number;
}

export interface StoredObject {
  bytes: Uint8Array;
  contentType: string;
  sha256: string;
}

/** Wire form "Attribute:op:value" with a JSON-encoded value. */
export function filterOf(attribute: string, op: string, value: unknown): string {
  return `${attribute}:${op}:${JSON.stringify(value)}`;
}

type FetchLike = typeof globalThis.fetch;

export class CatalogApi {
  constructor(
    readonly baseUrl: string,
    readonly token: string,
    private readonly fetchFn: FetchLike = globalThis.fetch,
  ) {}

  private async request(
    method: string,
    path: string,
    body?: unknown,
    raw?: { data: BodyInit; headers: Record<string, string> },
  ): Promise<Response> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.token}`,
    };
    let payload: BodyInit | undefined;
    if (raw) {
      Object.assign(headers, raw.headers);
      payload = raw.data;
    } else if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      payload = JSON.stringify(body);
    }
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: payload,
    });
    if (!response.ok) {
      let doc: Record<string, unknown> = {};
      try {
        doc = (await response.json()) as Record<string, unknown>;
      } catch {
        // non-JSON error body; fall through with what we have
      }
      const { error, message, ...details } = doc;
      throw new ApiError(
        typeof error === "string" ? error : "Error",
        response.status,
        typeof message === "string" ? message : response.statusText,
        details,
      );
    }
    return response;
  }

  async whoami(): Promise<Identity> {
    const doc = (await (await this.request("GET", "/me")).json()) as Envelope<Identity>;
    return doc.data[0]!;
  }

  async getModel(): Promise<unknown> {
    return (await this.request("GET", "/model")).json();
  }

  async query(schema: string, type: string, opts: QueryOptions = {}): Promise<QueryPage> {
    const params = new URLSearchParams();
    for (const f of opts.filters ?? []) params.append("filter", f);
    if (opts.join) params.append("join", opts.join);
    if (opts.limit !== undefined) params.append("limit", String(opts.limit));
    if (opts.offset !== undefined) params.append("offset", String(opts.offset));
    if (opts.projection) params.append("projection", opts.projection.join(","));
    const qs = params.size ? `?${params}` : "";
    const doc = (await (
      await this.request("GET", `/entity/${schema}:${type}${qs}`)
    ).json()) as Envelope<RecordDoc>;
    return { rows: doc.data, count: doc.count, modelVersion: doc.model_version };
  }

  async getRecord(schema: string, type: string, rid: string): Promise<RecordDoc> {
    const doc = (await (
      await this.request("GET", `/entity/${schema}:${type}/${rid}`)
    ).json()) as Envelope<RecordDoc>;
    return doc.data[0]!;
  }

  async insert(schema: string, type: string, rows: Record<string, unknown>[]): Promise<RecordDoc[]> {
    const doc = (await (
      await this.request("POST", `/entity/${schema}:${type}`, { records: rows })
    ).json()) as Envelope<RecordDoc>;
    return doc.data;
  }

  async update(
    schema: string,
    type: string,
    rid: string,
    revision: number,
    changes: { values?: Record<string, unknown>; release_state?: string },
  ): Promise<RecordDoc> {
    const doc = (await (
      await this.request("PUT", `/entity/${schema}:${type}`, { rid, revision, ...changes })
    ).json()) as Envelope<RecordDoc>;
    return doc.data[0]!;
  }

  async remove(schema: string, type: string, rid: string, revision: number): Promise<RecordDoc> {
    const doc = (await (
      await this.request("DELETE", `/entity/${schema}:${type}?rid=${rid}&revision=${revision}`)
    ).json()) as Envelope<RecordDoc>;
    return doc.data[0]!;
  }

  /** Terms of a vocabulary type, sorted by name. */
  async vocabularyTerms(schema: string, type: string): Promise<RecordDoc[]> {
    const page = await this.query(schema, type);
    return page.rows
      .slice()
      .sort((a, b) => String(a.values.Name).localeCompare(String(b.values.Name)));
  }

  async evolveSchema(changes: Record<string, unknown>[]): Promise<void> {
    await this.request("POST", "/schema/evolve", { changes });
  }

  async addTerm(
    schema: string,
    type: string,
    name: string,
    description?: string,
  ): Promise<RecordDoc> {
    const rows = await this.insert(schema, type, [
      { Name: name, Synonyms: [], Description: description ?? null },
    ]);
    return rows[0]!;
  }

  /** Fetch object bytes; absolute URLs must point back at this service. */
  async fetchStored(url: string): Promise<StoredObject> {
    if (!url.startsWith(`${this.baseUrl}/`)) {
      throw new ApiError("Error", 0, `asset URL is not served by ${this.baseUrl}: ${url}`);
    }
    const response = await this.request("GET", url.slice(this.baseUrl.length));
    return {
      bytes: new Uint8Array(await response.arrayBuffer()),
      contentType: response.headers.get("Content-Type") ?? "application/octet-stream",
      sha256: response.headers.get("X-Content-SHA256") ?? "",
    };
  }
}
