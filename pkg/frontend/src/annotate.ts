/**
 * Review worklists: step through records, pick a vocabulary term for each,
 * and submit the decisions as annotation records attributed to the
 * reviewer.
 *
 * Decisions queue locally (surviving a page reload via the provided
 * storage) and reconcile against the server before submission, so retries
 * after a failure never drop or duplicate an annotation.
 */

import { CatalogApi, RecordDoc, filterOf } from "./api";

export interface AnnotationSpec {
  /** Schema holding the annotation entity type. */
  schema: string;
  /** The annotation entity type, e.g. an image-diagnosis table. */
  annotationType: string;
  /** rid_ref attribute on the annotation type pointing at the reviewed record. */
  targetAttribute: string;
  /** term_ref attribute holding the chosen label. */
  labelAttribute: string;
}

export interface WorklistItem {
  rid: string;
  /** Asset preview source, when the reviewed record carries bytes. */
  assetUrl?: string;
  sha256?: string;
  filename?: string;
}

export interface Decision {
  rid: string;
  term: string;
}

export interface KeyValueStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

interface SessionState {
  cursor: number;
  queue: Decision[];
}

export class AnnotationSession {
  private cursor = 0;
  private queue: Decision[] = [];

  constructor(
    private readonly api: CatalogApi,
    readonly spec: AnnotationSpec,
    readonly items: WorklistItem[],
    private readonly storage?: KeyValueStorage,
    private readonly storageKey = "fairlake-annotation-session",
  ) {
    this.restore();
  }

  private restore(): void {
    const raw = this.storage?.getItem(this.storageKey);
    if (!raw) return;
    try {
      const state = JSON.parse(raw) as SessionState;
      this.cursor = state.cursor;
      this.queue = state.queue;
    } catch {
      // corrupt saved state starts the worklist over
    }
  }

  private persist(): void {
    this.storage?.setItem(
      this.storageKey,
      JSON.stringify({ cursor: this.cursor, queue: this.queue } satisfies SessionState),
    );
  }

  current(): WorklistItem | null {
    return this.items[this.cursor] ?? null;
  }

  get progress(): { done: number; total: number } {
    return { done: this.cursor, total: this.items.length };
  }

  /** Record a term for the current item and advance. */
  decide(term: string): void {
    const item = this.current();
    if (!item) throw new Error("worklist is exhausted");
    this.queue.push({ rid: item.rid, term });
    this.cursor += 1;
    this.persist();
  }

  /** Advance without recording anything. */
  skip(): void {
    if (!this.current()) throw new Error("worklist is exhausted");
    this.cursor += 1;
    this.persist();
  }

  pending(): Decision[] {
    return this.queue.slice();
  }

  /** Drop queued decisions this reviewer already has on the server. */
  async reconcile(): Promise<void> {
    if (!this.queue.length) return;
    const me = await this.api.whoami();
    const page = await this.api.query(this.spec.schema, this.spec.annotationType, {
      filters: [
        filterOf(this.spec.targetAttribute, "in", this.queue.map((d) => d.rid)),
      ],
    });
    const mine = new Set(
      page.rows
        .filter((row) => row.created_by === me.id)
        .map((row) => String(row.values[this.spec.targetAttribute])),
    );
    this.queue = this.queue.filter((d) => !mine.has(d.rid));
    this.persist();
  }

  /**
   * Submit queued decisions one at a time. A failure keeps the remaining
   * queue intact and rethrows, so the caller can ask the reviewer to retry.
   */
  async submit(): Promise<{ inserted: RecordDoc[] }> {
    await this.reconcile();
    const inserted: RecordDoc[] = [];
    while (this.queue.length) {
      const decision = this.queue[0]!;
      const rows = await this.api.insert(this.spec.schema, this.spec.annotationType, [
        {
          [this.spec.targetAttribute]: decision.rid,
          [this.spec.labelAttribute]: decision.term,
        },
      ]);
      inserted.push(rows[0]!);
      this.queue.shift();
      this.persist();
    }
    return { inserted };
  }
}

/** Build a worklist from asset records, carrying their preview bytes. */
export function worklistFromAssets(rows: RecordDoc[]): WorklistItem[] {
  return rows.map((row) => ({
    rid: row.rid,
    assetUrl: typeof row.values.URL === "string" ? row.values.URL : undefined,
    sha256: typeof row.values.SHA256 === "string" ? row.values.SHA256 : undefined,
    filename: typeof row.values.Filename === "string" ? row.values.Filename : undefined,
  }));
}
