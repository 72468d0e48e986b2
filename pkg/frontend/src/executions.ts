/**
 * Execution provenance page: one view gathering everything needed to rerun
 * a recorded execution, exactly as stored in the ml schema.
 */

import { CatalogApi, RecordDoc, filterOf } from "./api";
import { el } from "./views";

export interface ExecutionDetail {
  execution: RecordDoc;
  workflow: RecordDoc | null;
  datasets: RecordDoc[];
  assets: RecordDoc[];
  metadata: RecordDoc[];
}

export async function fetchExecutionDetail(
  api: CatalogApi,
  rid: string,
): Promise<ExecutionDetail> {
  const execution = await api.getRecord("ml", "Execution", rid);
  const workflowRid = execution.values.Workflow;
  const workflow =
    typeof workflowRid === "string" && workflowRid
      ? await api.getRecord("ml", "Workflow", workflowRid)
      : null;
  const links = await api.query("ml", "Execution_Dataset", {
    filters: [filterOf("Execution", "eq", rid)],
  });
  const datasets = await Promise.all(
    links.rows.map((link) =>
      api.getRecord("ml", "Dataset", String(link.values.Dataset)),
    ),
  );
  const assets = await api.query("ml", "Execution_Asset", {
    filters: [filterOf("Produced_By", "eq", rid)],
  });
  const metadata = await api.query("ml", "Execution_Metadata", {
    filters: [filterOf("Execution", "eq", rid)],
  });
  return {
    execution,
    workflow,
    datasets,
    assets: assets.rows,
    metadata: metadata.rows,
  };
}

function fileList(rows: RecordDoc[], cssClass: string): HTMLElement {
  const list = el("ul", { class: cssClass });
  for (const row of rows) {
    const item = el(
      "li",
      { "data-rid": row.rid },
      el("span", { class: "filename" }, String(row.values.Filename ?? row.rid)),
      " ",
      el("code", { class: "digest" }, String(row.values.SHA256 ?? "")),
      " ",
    );
    if (typeof row.values.URL === "string") {
      item.append(el("a", { class: "download", href: row.values.URL }, "download"));
    }
    list.append(item);
  }
  return list;
}

export function renderExecutionDetail(detail: ExecutionDetail): HTMLElement {
  const execution = detail.execution;
  const status = String(execution.values.Status ?? "unknown");
  const page = el(
    "section",
    { class: "execution-detail", "data-rid": execution.rid },
    el("h2", {}, `Execution ${execution.rid}`),
    el("p", {}, el("span", { class: `status-badge status-${status}` }, status)),
  );

  if (execution.values.Description) {
    page.append(el("p", { class: "description" }, String(execution.values.Description)));
  }
  if (execution.values.Duration !== null && execution.values.Duration !== undefined) {
    page.append(el("p", { class: "duration" }, `took ${execution.values.Duration}s`));
  }
  if (status === "failed" && execution.values.Status_Detail) {
    page.append(
      el("p", { class: "status-detail", role: "alert" }, String(execution.values.Status_Detail)),
    );
  }

  const workflow = el("div", { class: "workflow" }, el("h3", {}, "Workflow"));
  if (detail.workflow) {
    workflow.append(
      el("p", {}, String(detail.workflow.values.Name ?? "")),
      el("p", {}, el("code", {}, String(detail.workflow.values.Code_URI ?? ""))),
      el("p", {}, el("code", { class: "checksum" }, String(detail.workflow.values.Code_Checksum ?? ""))),
    );
  }
  page.append(workflow);

  const datasets = el("div", { class: "datasets" }, el("h3", {}, "Input datasets"));
  const datasetList = el("ul", {});
  for (const dataset of detail.datasets) {
    datasetList.append(
      el(
        "li",
        { "data-rid": dataset.rid },
        el("a", { class: "minid", href: `#/t/ml/Dataset/${dataset.rid}` },
          String(dataset.values.Minid ?? dataset.rid)),
        ` ${dataset.values.Description ?? ""}`,
      ),
    );
  }
  datasets.append(datasetList);
  page.append(datasets);

  page.append(el("div", { class: "assets" }, el("h3", {}, "Execution assets"),
                fileList(detail.assets, "asset-list")));
  page.append(el("div", { class: "metadata" }, el("h3", {}, "Execution metadata"),
                fileList(detail.metadata, "metadata-list")));
  return page;
}
