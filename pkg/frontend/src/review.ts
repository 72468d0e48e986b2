/**
 * Review screen: step through a worklist of records, see each one's asset,
 * pick a vocabulary term, and submit the queued decisions.
 *
 * Like every other view, the wiring is derived from the model: the
 * annotation type's foreign key names the reviewed type, its term_ref
 * attribute names the vocabulary.
 */

import { CatalogApi } from "./api";
import {
  AnnotationSession,
  AnnotationSpec,
  KeyValueStorage,
  WorklistItem,
  worklistFromAssets,
} from "./annotate";
import { ModelDoc, findType, outboundLinks } from "./model";
import { el } from "./views";

export interface ReviewTarget {
  spec: AnnotationSpec;
  targetSchema: string;
  targetType: string;
}

/** Derive the review wiring from the annotation type's own declaration. */
export function reviewTarget(
  model: ModelDoc,
  schema: string,
  annotationType: string,
): ReviewTarget {
  const et = findType(model, schema, annotationType);
  const label = et.attributes.find((a) => a.value_kind === "term_ref");
  if (!label) {
    throw new Error(`${schema}:${annotationType} has no term_ref attribute to hold decisions`);
  }
  const link = outboundLinks(et).find((l) => l.attribute !== label.name);
  if (!link) {
    throw new Error(`${schema}:${annotationType} has no foreign key naming the reviewed type`);
  }
  return {
    spec: {
      schema,
      annotationType,
      targetAttribute: link.attribute,
      labelAttribute: label.name,
    },
    targetSchema: link.schema,
    targetType: link.type,
  };
}

// inline preview by filename; anything else gets a download link
const IMAGE_FILENAME = /\.(png|jpe?g|gif|svg|webp)$/i;

export interface ReviewOptions {
  /** Explicit worklist; defaults to every visible record of the reviewed type. */
  items?: WorklistItem[];
  storage?: KeyValueStorage;
}

export async function renderReviewView(
  api: CatalogApi,
  model: ModelDoc,
  schema: string,
  annotationType: string,
  options: ReviewOptions = {},
): Promise<HTMLElement> {
  const target = reviewTarget(model, schema, annotationType);
  const items =
    options.items ??
    worklistFromAssets((await api.query(target.targetSchema, target.targetType)).rows);
  const session = new AnnotationSession(
    api, target.spec, items, options.storage,
    `fairlake-review-${schema}-${annotationType}`);

  const labelAttr = findType(model, schema, annotationType)
    .attributes.find((a) => a.name === target.spec.labelAttribute)!;
  const termType = labelAttr.term_type ?? "";
  const owner = model.schemas.find((s) =>
    s.entity_types.some((t) => t.name === termType && t.is_vocabulary),
  );
  const terms = owner ? await api.vocabularyTerms(owner.name, termType) : [];

  const progress = el("p", { class: "review-progress" });
  const stage = el("div", { class: "review-stage" });
  const status = el("p", { class: "review-status" });
  const select = el("select", { class: "term-select", name: target.spec.labelAttribute });
  for (const term of terms) {
    const name = String(term.values.Name);
    select.append(el("option", { value: name }, name));
  }
  const decideButton = el("button", { type: "button", class: "decide-button" }, "Record decision");
  const skipButton = el("button", { type: "button", class: "skip-button" }, "Skip");
  const submitButton = el("button", { type: "button", class: "submit-button" }, "Submit decisions");

  function refresh(): void {
    const { done, total } = session.progress;
    progress.textContent = `${done} of ${total} reviewed, ${session.pending().length} queued`;
    stage.replaceChildren();
    const item = session.current();
    if (!item) {
      stage.append(el("p", { class: "review-done" },
                      "Worklist complete. Submit your queued decisions."));
      decideButton.setAttribute("disabled", "disabled");
      skipButton.setAttribute("disabled", "disabled");
      return;
    }
    decideButton.removeAttribute("disabled");
    skipButton.removeAttribute("disabled");
    if (item.assetUrl && item.filename && IMAGE_FILENAME.test(item.filename)) {
      stage.append(el("img", { class: "preview", src: item.assetUrl, alt: item.filename }));
    } else if (item.assetUrl) {
      stage.append(el("a", { class: "download", href: item.assetUrl },
                      item.filename ?? item.rid));
    }
    stage.append(el("p", { class: "review-rid" }, item.rid));
  }

  decideButton.addEventListener("click", () => {
    session.decide(select.value);
    refresh();
  });
  skipButton.addEventListener("click", () => {
    session.skip();
    refresh();
  });
  submitButton.addEventListener("click", () => {
    void submit();
  });

  async function submit(): Promise<void> {
    status.textContent = "submitting";
    try {
      const { inserted } = await session.submit();
      status.textContent = `submitted ${inserted.length} annotations`;
      refresh();
    } catch (error) {
      // the queue is intact; pressing submit again picks up where this left off
      status.textContent = "submission failed, decisions kept: " +
        (error instanceof Error ? error.message : String(error));
    }
  }

  refresh();
  return el(
    "section",
    { class: "review-view" },
    el("h2", {}, `Review ${target.targetSchema}:${target.targetType}`),
    progress,
    stage,
    el("div", { class: "review-controls" }, select, " ", decideButton, " ", skipButton, " ", submitButton),
    status,
  );
}
