// @vitest-environment jsdom

/**
 * Review screen over the live service: worklist stepping, asset preview,
 * decision recording, and submission, all wired from the model.
 */

import { beforeAll, describe, expect, it } from "vitest";
import { CatalogApi, RecordDoc, filterOf } from "../src/api";
import { worklistFromAssets } from "../src/annotate";
import { renderReviewView, reviewTarget } from "../src/review";
import {
  ANNOTATION_SPEC as SPEC,
  TOKENS,
  api,
  ensureAnnotationType,
  fetchModel,
  fixture,
  until,
} from "./helpers";

beforeAll(async () => {
  await ensureAnnotationType();
});

/** Disposable reviewed records, invisible to the seeded worklists. */
async function makeImages(filenames: string[]): Promise<RecordDoc[]> {
  const curator = api(fixture().eye, TOKENS.curator);
  const observations = await curator.query("eyeai", "Observation", { limit: 1 });
  return curator.insert(
    "eyeai", "Image",
    filenames.map((filename, index) => ({
      Observation: observations.rows[0]!.rid,
      Image_Side: "Left",
      Angle: "2",
      Diagnosis: "Unknown",
      URL: `${fixture().eye}/store/raw/eyeai/${filename}`,
      Filename: filename,
      Length: 3 + index,
      SHA256: "0".repeat(64),
    })),
  );
}

function click(view: HTMLElement, selector: string): void {
  view.querySelector(selector)!.dispatchEvent(
    new MouseEvent("click", { bubbles: true, cancelable: true }));
}

describe("wiring", () => {
  it("derives target type and label attribute from the annotation type", async () => {
    const target = reviewTarget(
      await fetchModel(fixture().eye), SPEC.schema, SPEC.annotationType);
    expect(target.spec).toEqual(SPEC);
    expect(target.targetSchema).toBe("eyeai");
    expect(target.targetType).toBe("Image");
  });
});

describe("default worklist", () => {
  it("previews the first visible record and offers the live vocabulary", async () => {
    const bob = api(fixture().eye, TOKENS.bob);
    const view = await renderReviewView(
      bob, await fetchModel(fixture().eye), SPEC.schema, SPEC.annotationType);

    expect(view.querySelector("h2")?.textContent).toBe("Review eyeai:Image");
    expect(view.querySelector(".review-progress")?.textContent)
      .toMatch(/^0 of \d+ reviewed, 0 queued$/);
    const preview = view.querySelector<HTMLImageElement>("img.preview")!;
    expect(preview.getAttribute("src")).toMatch(/\/store\/raw\/eyeai\/fundus_.*\.png$/);

    const options = [...view.querySelectorAll<HTMLOptionElement>(".term-select option")]
      .map((o) => o.value);
    for (const seeded of ["No Glaucoma", "Referable Glaucoma", "Unknown"]) {
      expect(options).toContain(seeded);
    }
  });
});

describe("deciding and submitting", () => {
  it("records one attributed annotation per decision", async () => {
    const images = await makeImages(["probe_a.png", "probe_b.txt"]);
    const curator = api(fixture().eye, TOKENS.curator);
    const view = await renderReviewView(
      curator, await fetchModel(fixture().eye), SPEC.schema, SPEC.annotationType,
      { items: worklistFromAssets(images) });
    const select = view.querySelector<HTMLSelectElement>("select.term-select")!;

    expect(view.querySelector(".review-progress")?.textContent)
      .toBe("0 of 2 reviewed, 0 queued");
    expect(view.querySelector("img.preview")?.getAttribute("alt")).toBe("probe_a.png");

    select.value = "No Glaucoma";
    click(view, ".decide-button");
    expect(view.querySelector(".review-progress")?.textContent)
      .toBe("1 of 2 reviewed, 1 queued");
    // the second record is not an image, so it gets a download link
    expect(view.querySelector("img.preview")).toBeNull();
    expect(view.querySelector(".review-stage a.download")?.textContent).toBe("probe_b.txt");

    select.value = "Referable Glaucoma";
    click(view, ".decide-button");
    expect(view.querySelector(".review-done")).not.toBeNull();
    expect(view.querySelector(".decide-button")?.hasAttribute("disabled")).toBe(true);

    click(view, ".submit-button");
    await until(() =>
      view.querySelector(".review-status")?.textContent === "submitted 2 annotations");

    const page = await curator.query("eyeai", SPEC.annotationType, {
      filters: [filterOf("Image", "in", images.map((r) => r.rid))],
    });
    expect(page.count).toBe(2);
    const byImage = new Map(page.rows.map((row) =>
      [row.values.Image, row.values.Diagnosis_Tag]));
    expect(byImage.get(images[0]!.rid)).toBe("No Glaucoma");
    expect(byImage.get(images[1]!.rid)).toBe("Referable Glaucoma");
    expect(page.rows.every((row) => row.created_by === "carol")).toBe(true);
  });

  it("keeps decisions across a failed submission and never duplicates", async () => {
    const images = await makeImages(["retry_probe.png"]);
    let armed = true;
    const lossy: typeof fetch = async (input, init) => {
      const response = await fetch(input, init);
      if (armed && (init?.method ?? "GET") === "POST") {
        armed = false;
        throw new Error("response lost on the wire");
      }
      return response;
    };
    const wendy = new CatalogApi(fixture().eye, TOKENS.wendy, lossy);
    const view = await renderReviewView(
      wendy, await fetchModel(fixture().eye), SPEC.schema, SPEC.annotationType,
      { items: worklistFromAssets(images) });

    view.querySelector<HTMLSelectElement>("select.term-select")!.value = "Unknown";
    click(view, ".decide-button");
    click(view, ".submit-button");
    await until(() => (view.querySelector(".review-status")?.textContent ?? "")
      .startsWith("submission failed"));
    expect(view.querySelector(".review-progress")?.textContent)
      .toBe("1 of 1 reviewed, 1 queued");

    // retry reconciles against the server: the lost insert already landed
    click(view, ".submit-button");
    await until(() => (view.querySelector(".review-status")?.textContent ?? "")
      .startsWith("submitted"));

    const page = await api(fixture().eye, TOKENS.curator).query(
      "eyeai", SPEC.annotationType,
      { filters: [filterOf("Image", "eq", images[0]!.rid)] });
    expect(page.count).toBe(1);
    expect(page.rows[0]!.created_by).toBe("wendy");
    expect(page.rows[0]!.values.Diagnosis_Tag).toBe("Unknown");
  });
});
