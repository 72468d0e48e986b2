import { inject } from "vitest";
import { CatalogApi } from "../src/api";
import { AnnotationSpec } from "../src/annotate";
import { ModelDoc, findSchema } from "../src/model";
import type { FixtureInfo } from "./global-setup";

export const TOKENS = {
  curator: "tk-curator-carol",
  alice: "tk-writer-alice",
  wendy: "tk-writer-wendy",
  bob: "tk-reader-bob",
} as const;

export function fixture(): FixtureInfo {
  return inject("fixture");
}

export function api(base: string, token: string): CatalogApi {
  return new CatalogApi(base, token);
}

export async function fetchModel(base: string, token: string = TOKENS.curator): Promise<ModelDoc> {
  return (await api(base, token).getModel()) as ModelDoc;
}

/** Wait for async DOM population kicked off by the render helpers. */
export function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

/** Poll until a condition holds; the render helpers update the DOM async. */
export async function until(check: () => boolean, timeoutMs = 5000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (!check()) {
    if (Date.now() > deadline) throw new Error("condition never became true");
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
}

/** The annotation entity type several suites review against. */
export const ANNOTATION_SPEC: AnnotationSpec = {
  schema: "eyeai",
  annotationType: "Image_Annotation",
  targetAttribute: "Image",
  labelAttribute: "Diagnosis_Tag",
};

/**
 * Evolve the eye catalog with the annotation entity type, the way an
 * operator would before a review campaign. Idempotent across suites.
 */
export async function ensureAnnotationType(): Promise<void> {
  const curator = api(fixture().eye, TOKENS.curator);
  const model = (await curator.getModel()) as ModelDoc;
  const eyeai = findSchema(model, "eyeai");
  if (eyeai.entity_types.some((et) => et.name === ANNOTATION_SPEC.annotationType)) return;
  await curator.evolveSchema([
    {
      kind: "add_entity_type",
      schema: "eyeai",
      entity_type: {
        name: ANNOTATION_SPEC.annotationType,
        is_vocabulary: false,
        is_asset: false,
        attributes: [
          { name: "Image", value_kind: "rid_ref", nullable: false, default: null },
          { name: "Diagnosis_Tag", value_kind: "term_ref", nullable: false,
            default: null, term_type: "Diagnosis_Tag" },
        ],
        foreign_keys: [{ from: "Image", to_schema: "eyeai", to_type: "Image" }],
      },
    },
  ]);
}
