/**
 * View models derived entirely from the catalog's introspection document.
 *
 * Nothing in here knows any particular domain: list columns, link sections,
 * and edit widgets all come from the fetched model, so a schema evolution
 * shows up after a refresh with no code change.
 */

export interface AttributeDoc {
  name: string;
  value_kind: string;
  nullable: boolean;
  default: unknown;
  term_type?: string;
}

export interface ForeignKeyDoc {
  from: string;
  to_schema: string | null;
  to_type: string | null;
}

export interface EntityTypeDoc {
  name: string;
  is_vocabulary: boolean;
  is_asset: boolean;
  attributes: AttributeDoc[];
  foreign_keys: ForeignKeyDoc[];
}

export interface SchemaDoc {
  name: string;
  kind: "ml" | "domain";
  link_target: string | null;
  entity_types: EntityTypeDoc[];
}

export interface ModelDoc {
  model_version: number;
  prefix: string;
  annotations: Record<string, string>;
  schemas: SchemaDoc[];
}

export interface NavGroup {
  schema: string;
  kind: string;
  types: string[];
}

export interface LinkSection {
  /** Attribute on the referencing side that carries the rid. */
  attribute: string;
  schema: string;
  type: string;
}

export type Widget =
  | { kind: "text" }
  | { kind: "number" }
  | { kind: "checkbox" }
  | { kind: "timestamp" }
  | { kind: "json" }
  | { kind: "rid" }
  | { kind: "term"; termType: string };

export function navigationGroups(model: ModelDoc): NavGroup[] {
  return model.schemas.map((schema) => ({
    schema: schema.name,
    kind: schema.kind,
    types: schema.entity_types.map((et) => et.name),
  }));
}

export function findSchema(model: ModelDoc, name: string): SchemaDoc {
  const schema = model.schemas.find((s) => s.name === name);
  if (!schema) throw new Error(`no schema named ${name}`);
  return schema;
}

export function findType(model: ModelDoc, schema: string, type: string): EntityTypeDoc {
  const et = findSchema(model, schema).entity_types.find((t) => t.name === type);
  if (!et) throw new Error(`no entity type ${schema}:${type}`);
  return et;
}

export function listColumns(et: EntityTypeDoc): string[] {
  return et.attributes.map((a) => a.name);
}

/** Where this type points: one section per declared foreign key. */
export function outboundLinks(et: EntityTypeDoc): LinkSection[] {
  return et.foreign_keys
    .filter((fk) => fk.to_schema !== null && fk.to_type !== null)
    .map((fk) => ({ attribute: fk.from, schema: fk.to_schema!, type: fk.to_type! }));
}

/** Who points at this type: every foreign key in the model targeting it. */
export function inboundLinks(model: ModelDoc, schema: string, type: string): LinkSection[] {
  const sections: LinkSection[] = [];
  for (const s of model.schemas) {
    for (const et of s.entity_types) {
      for (const fk of et.foreign_keys) {
        if (fk.to_schema === schema && fk.to_type === type) {
          sections.push({ attribute: fk.from, schema: s.name, type: et.name });
        }
      }
    }
  }
  return sections;
}

/** Pick the edit widget from the declared value kind alone. */
export function widgetFor(attr: AttributeDoc): Widget {
  switch (attr.value_kind) {
    case "term_ref":
      return { kind: "term", termType: attr.term_type ?? "" };
    case "integer":
    case "float":
      return { kind: "number" };
    case "boolean":
      return { kind: "checkbox" };
    case "timestamp":
      return { kind: "timestamp" };
    case "json":
      return { kind: "json" };
    case "rid_ref":
      return { kind: "rid" };
    default:
      return { kind: "text" };
  }
}

export function formatCell(value: unknown): string {
  if (value === null || value === undefined) return "";
  if (typeof value === "object") return JSON.stringify(value);
  return String(value);
}

/** Parse a form field back into the attribute's value space. */
export function parseCell(attr: AttributeDoc, raw: string, checked?: boolean): unknown {
  if (attr.value_kind === "boolean") return checked ?? false;
  if (raw === "") return null;
  if (attr.value_kind === "integer") return Number.parseInt(raw, 10);
  if (attr.value_kind === "float") return Number.parseFloat(raw);
  if (attr.value_kind === "json") return JSON.parse(raw);
  return raw;
}
