/**
 * DOM builders for the generic catalog views: sidebar, list, detail, and
 * edit form. All structure is derived from the introspected model; the
 * only compiled-in names are the record envelope fields (rid, revision,
 * release_state, created_by).
 */

import { ApiError, CatalogApi, Identity, RecordDoc, filterOf } from "./api";
import {
  AttributeDoc,
  EntityTypeDoc,
  ModelDoc,
  findType,
  formatCell,
  inboundLinks,
  listColumns,
  navigationGroups,
  outboundLinks,
  parseCell,
  widgetFor,
} from "./model";

type Child = Node | string | null | undefined;

/** Tiny element helper; attrs go on the node, children get appended. */
export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    if (child === null || child === undefined) continue;
    node.append(child);
  }
  return node;
}

export function canEdit(identity: Identity): boolean {
  return identity.roles.includes("writer") || identity.roles.includes("curator");
}

export type Navigate = (schema: string, type: string, rid?: string) => void;

export function renderSidebar(model: ModelDoc, navigate: Navigate): HTMLElement {
  const nav = el("nav", { class: "sidebar" });
  for (const group of navigationGroups(model)) {
    nav.append(el("h3", {}, `${group.schema} (${group.kind})`));
    const list = el("ul", {});
    for (const type of group.types) {
      const link = el("a", { href: `#/t/${group.schema}/${type}` }, type);
      link.addEventListener("click", (event) => {
        event.preventDefault();
        navigate(group.schema, type);
      });
      list.append(el("li", {}, link));
    }
    nav.append(list);
  }
  return nav;
}

export async function renderListView(
  api: CatalogApi,
  model: ModelDoc,
  schema: string,
  type: string,
  navigate: Navigate,
): Promise<HTMLElement> {
  const et = findType(model, schema, type);
  const page = await api.query(schema, type);
  const columns = listColumns(et);

  const header = el("tr", {}, el("th", {}, "rid"));
  for (const column of columns) header.append(el("th", {}, column));
  header.append(el("th", {}, "state"));

  const body = el("tbody", {});
  for (const row of page.rows) {
    const link = el("a", { href: `#/t/${schema}/${type}/${row.rid}` }, row.rid);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      navigate(schema, type, row.rid);
    });
    const tr = el("tr", { "data-rid": row.rid }, el("td", {}, link));
    for (const column of columns) {
      tr.append(el("td", {}, formatCell(row.values[column])));
    }
    tr.append(el("td", {}, row.release_state));
    body.append(tr);
  }

  return el(
    "section",
    { class: "list-view", "data-count": String(page.count) },
    el("h2", {}, `${schema}:${type}`),
    el("table", {}, el("thead", {}, header), body),
  );
}

async function linkSectionList(
  api: CatalogApi,
  section: { schema: string; type: string; attribute: string },
  rid: string,
): Promise<HTMLElement> {
  const page = await api.query(section.schema, section.type, {
    filters: [filterOf(section.attribute, "eq", rid)],
  });
  const list = el("ul", {});
  for (const row of page.rows) {
    list.append(
      el("li", {}, el("a", { href: `#/t/${section.schema}/${section.type}/${row.rid}` }, row.rid)),
    );
  }
  return list;
}

export async function renderDetailView(
  api: CatalogApi,
  model: ModelDoc,
  schema: string,
  type: string,
  rid: string,
  identity: Identity,
  onEdit?: () => void,
): Promise<HTMLElement> {
  const et = findType(model, schema, type);
  const record = await api.getRecord(schema, type, rid);

  const section = el(
    "section",
    { class: "detail-view" },
    el("h2", {}, `${schema}:${type} ${rid}`),
    el(
      "p",
      { class: "record-meta" },
      `${record.release_state}, revision ${record.revision}, created by ${record.created_by}`,
    ),
  );

  const values = el("dl", { class: "values" });
  for (const attr of et.attributes) {
    values.append(el("dt", {}, attr.name));
    const value = record.values[attr.name];
    const outbound = outboundLinks(et).find((l) => l.attribute === attr.name);
    if (outbound && typeof value === "string" && value) {
      values.append(
        el("dd", {}, el("a", { href: `#/t/${outbound.schema}/${outbound.type}/${value}` }, value)),
      );
    } else {
      values.append(el("dd", {}, formatCell(value)));
    }
  }
  section.append(values);

  const inbound = inboundLinks(model, schema, type);
  if (inbound.length) {
    const refs = el("div", { class: "inbound" }, el("h3", {}, "Referenced by"));
    for (const link of inbound) {
      refs.append(el("h4", {}, `${link.schema}:${link.type} via ${link.attribute}`));
      refs.append(await linkSectionList(api, link, rid));
    }
    section.append(refs);
  }

  // readers get no mutation affordances; the server enforces it regardless
  if (canEdit(identity)) {
    const button = el("button", { class: "edit-button" }, "Edit");
    if (onEdit) button.addEventListener("click", onEdit);
    section.append(button);
  }
  return section;
}

async function widgetNode(
  api: CatalogApi,
  model: ModelDoc,
  schema: string,
  attr: AttributeDoc,
  value: unknown,
): Promise<HTMLElement> {
  const widget = widgetFor(attr);
  if (widget.kind === "term") {
    // dropdown reflects the vocabulary as it exists right now
    const select = el("select", { name: attr.name, class: "term-select" });
    if (attr.nullable) select.append(el("option", { value: "" }, ""));
    const owner = model.schemas.find((s) =>
      s.entity_types.some((t) => t.name === widget.termType && t.is_vocabulary),
    );
    const terms = owner ? await api.vocabularyTerms(owner.name, widget.termType) : [];
    for (const term of terms) {
      const name = String(term.values.Name);
      const option = el("option", { value: name }, name);
      if (name === value) option.setAttribute("selected", "selected");
      select.append(option);
    }
    return select;
  }
  if (widget.kind === "checkbox") {
    const box = el("input", { type: "checkbox", name: attr.name });
    if (value === true) box.setAttribute("checked", "checked");
    return box;
  }
  if (widget.kind === "json") {
    const area = el("textarea", { name: attr.name });
    area.value = value === null || value === undefined ? "" : JSON.stringify(value);
    return area;
  }
  const input = el("input", {
    type: widget.kind === "number" ? "number" : "text",
    name: attr.name,
  });
  if (widget.kind === "number") input.setAttribute("step", "any");
  input.value = value === null || value === undefined ? "" : String(value);
  return input;
}

export interface EditCallbacks {
  onSaved?: (record: RecordDoc) => void;
  onReload?: () => void;
}

/**
 * Edit form for an existing record, or a create form when record is null.
 * A concurrent change surfaces the server's StaleWrite as a reload prompt
 * instead of silently overwriting.
 */
export async function renderEditForm(
  api: CatalogApi,
  model: ModelDoc,
  schema: string,
  type: string,
  record: RecordDoc | null,
  callbacks: EditCallbacks = {},
): Promise<HTMLFormElement> {
  const et = findType(model, schema, type);
  const form = el("form", { class: "edit-form" });
  for (const attr of et.attributes) {
    const label = el("label", {}, `${attr.name}${attr.nullable ? "" : " *"} `);
    label.append(await widgetNode(api, model, schema, attr, record?.values[attr.name] ?? null));
    form.append(label);
  }
  const status = el("p", { class: "form-status" });
  form.append(el("button", { type: "submit" }, record ? "Save" : "Create"), status);

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void submit();
  });

  async function submit(): Promise<void> {
    const values: Record<string, unknown> = {};
    for (const attr of et.attributes) {
      const field = form.elements.namedItem(attr.name);
      if (field instanceof HTMLInputElement && field.type === "checkbox") {
        values[attr.name] = parseCell(attr, "", field.checked);
      } else if (
        field instanceof HTMLInputElement ||
        field instanceof HTMLSelectElement ||
        field instanceof HTMLTextAreaElement
      ) {
        values[attr.name] = parseCell(attr, field.value);
      }
    }
    try {
      const saved = record
        ? await api.update(schema, type, record.rid, record.revision, { values })
        : (await api.insert(schema, type, [values]))[0]!;
      status.textContent = `saved ${saved.rid} (revision ${saved.revision})`;
      callbacks.onSaved?.(saved);
    } catch (error) {
      if (error instanceof ApiError && error.code === "StaleWrite") {
        showStalePrompt(error);
        return;
      }
      status.textContent = error instanceof Error ? error.message : String(error);
    }
  }

  function showStalePrompt(error: ApiError): void {
    form.querySelector(".stale-prompt")?.remove();
    const reload = el("button", { type: "button" }, "Reload");
    reload.addEventListener("click", () => callbacks.onReload?.());
    form.append(
      el(
        "div",
        { class: "stale-prompt", role: "alert" },
        `Someone else changed this record (now at revision ` +
          `${error.details.current_revision}). Reload to pick up their ` +
          `changes before editing again. `,
        reload,
      ),
    );
  }

  return form;
}
