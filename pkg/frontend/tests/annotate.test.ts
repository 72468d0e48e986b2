/**
 * Review workflow against the live service: two reviewers label the same
 * ten images and every decision lands as exactly one attributed
 * annotation record, surviving interruptions and retries.
 *
 * The annotation entity type is not part of the seeded domain schema; the
 * suite adds it through the schema evolution route first, the same way an
 * operator would.
 */

import { beforeAll, describe, expect, it } from "vitest";
import { CatalogApi, filterOf } from "../src/api";
import { AnnotationSession, WorklistItem, worklistFromAssets } from "../src/annotate";
import { ModelDoc, findSchema } from "../src/model";
import { ANNOTATION_SPEC as SPEC, TOKENS, api, ensureAnnotationType, fixture } from "./helpers";

class FakeStorage {
  private readonly items = new Map<string, string>();
  getItem(key: string): string | null {
    return this.items.get(key) ?? null;
  }
  setItem(key: string, value: string): void {
    this.items.set(key, value);
  }
}

/** Worklist rows for a slice of the seeded images, in fixture order. */
async function worklist(offset: number, count: number): Promise<WorklistItem[]> {
  const rids = fixture().imageRids.slice(offset, offset + count);
  const page = await api(fixture().eye, TOKENS.bob).query("eyeai", "Image");
  const byRid = new Map(page.rows.map((row) => [row.rid, row]));
  return worklistFromAssets(rids.map((rid) => byRid.get(rid)!));
}

beforeAll(async () => {
  const curator = api(fixture().eye, TOKENS.curator);
  const before = (await curator.getModel()) as ModelDoc;
  await ensureAnnotationType();
  const evolved = (await curator.getModel()) as ModelDoc;
  expect(evolved.model_version).toBeGreaterThanOrEqual(before.model_version);
  expect(findSchema(evolved, "eyeai").entity_types.map((et) => et.name))
    .toContain(SPEC.annotationType);
});

describe("two reviewers over the same worklist", () => {
  it("produces exactly one attributed record per reviewer per image", async () => {
    const items = await worklist(0, 10);
    expect(items).toHaveLength(10);
    expect(items.every((item) => item.assetUrl && item.sha256 && item.filename)).toBe(true);

    const labels = ["No Glaucoma", "Referable Glaucoma"];
    for (const token of [TOKENS.alice, TOKENS.wendy] as const) {
      const session = new AnnotationSession(
        api(fixture().eye, token), SPEC, items, new FakeStorage());
      expect(session.progress).toEqual({ done: 0, total: 10 });
      for (let i = 0; session.current(); i += 1) {
        session.decide(labels[i % labels.length]!);
      }
      expect(session.progress).toEqual({ done: 10, total: 10 });
      expect(session.pending()).toHaveLength(10);
      const { inserted } = await session.submit();
      expect(inserted).toHaveLength(10);
      expect(session.pending()).toHaveLength(0);
      expect(() => session.decide("Unknown")).toThrow(/exhausted/);
    }

    const rids = items.map((item) => item.rid);
    const all = await api(fixture().eye, TOKENS.curator).query(
      "eyeai", SPEC.annotationType,
      { filters: [filterOf("Image", "in", rids)] });
    expect(all.count).toBe(20);

    const byReviewer = new Map<string, string[]>();
    for (const row of all.rows) {
      const images = byReviewer.get(row.created_by) ?? [];
      images.push(String(row.values.Image));
      byReviewer.set(row.created_by, images);
    }
    expect([...byReviewer.keys()].sort()).toEqual(["alice", "wendy"]);
    for (const images of byReviewer.values()) {
      expect(images.sort()).toEqual([...rids].sort());
      expect(new Set(images).size).toBe(10);
    }
  });
});

describe("skipping", () => {
  it("a skipped item leaves no record behind", async () => {
    const items = await worklist(10, 2);
    const session = new AnnotationSession(
      api(fixture().eye, TOKENS.alice), SPEC, items, new FakeStorage());
    session.skip();
    session.decide("Unknown");
    const { inserted } = await session.submit();
    expect(inserted).toHaveLength(1);

    const page = await api(fixture().eye, TOKENS.curator).query(
      "eyeai", SPEC.annotationType,
      { filters: [filterOf("Image", "in", items.map((i) => i.rid))] });
    expect(page.count).toBe(1);
    expect(page.rows[0]!.values.Image).toBe(items[1]!.rid);
    expect(page.rows[0]!.created_by).toBe("alice");
  });
});

describe("retry after a lost response", () => {
  function lossyOnFirstPost(realFetch: typeof fetch): typeof fetch {
    let armed = true;
    return async (input, init) => {
      const response = await realFetch(input, init);
      if (armed && (init?.method ?? "GET") === "POST") {
        armed = false;
        throw new Error("response lost on the wire");
      }
      return response;
    };
  }

  it("reconciles against the server instead of double-inserting", async () => {
    const items = await worklist(10, 2);
    const flaky = new CatalogApi(
      fixture().eye, TOKENS.wendy, lossyOnFirstPost(globalThis.fetch));
    const session = new AnnotationSession(flaky, SPEC, items, new FakeStorage());
    session.decide("Referable Glaucoma");
    session.decide("No Glaucoma");

    await expect(session.submit()).rejects.toThrow(/response lost/);
    // the first insert reached the server even though its response was lost
    expect(session.pending()).toHaveLength(2);

    const { inserted } = await session.submit();
    expect(inserted).toHaveLength(1);
    expect(session.pending()).toHaveLength(0);

    const page = await api(fixture().eye, TOKENS.curator).query(
      "eyeai", SPEC.annotationType,
      { filters: [filterOf("Image", "in", items.map((i) => i.rid))] });
    const wendys = page.rows.filter((row) => row.created_by === "wendy");
    expect(wendys).toHaveLength(2);
    expect(new Set(wendys.map((row) => row.values.Image)).size).toBe(2);
  });
});

describe("session persistence", () => {
  it("progress and queued decisions survive a page reload", () => {
    const storage = new FakeStorage();
    const items: WorklistItem[] = [{ rid: "img-1" }, { rid: "img-2" }, { rid: "img-3" }];
    const client = api(fixture().eye, TOKENS.alice);

    const first = new AnnotationSession(client, SPEC, items, storage);
    first.decide("No Glaucoma");
    first.skip();
    first.decide("Unknown");
    expect(first.current()).toBeNull();

    const reloaded = new AnnotationSession(client, SPEC, items, storage);
    expect(reloaded.progress).toEqual({ done: 3, total: 3 });
    expect(reloaded.pending()).toEqual([
      { rid: "img-1", term: "No Glaucoma" },
      { rid: "img-3", term: "Unknown" },
    ]);
  });
});
