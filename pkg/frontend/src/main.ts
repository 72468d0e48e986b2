/**
 * Application shell: loads config.json, holds the bearer token, and routes
 * between the generic views by URL hash.
 *
 * Routes:
 *   #/t/<schema>/<Type>             list view
 *   #/t/<schema>/<Type>/<rid>       detail view
 *   #/t/<schema>/<Type>/<rid>/edit  edit form
 *   #/x/<rid>                       execution provenance page
 *   #/review/<schema>/<Type>        annotation worklist for that type
 */

import { ApiConfig, ApiError, CatalogApi, Identity } from "./api";
import { ModelDoc } from "./model";
import { fetchExecutionDetail, renderExecutionDetail } from "./executions";
import { renderReviewView } from "./review";
import { el, renderDetailView, renderEditForm, renderListView, renderSidebar } from "./views";

const TOKEN_KEY = "fairlake-token";

async function loadConfig(): Promise<ApiConfig> {
  const response = await fetch("./config.json");
  if (!response.ok) throw new Error("config.json is missing next to index.html");
  return (await response.json()) as ApiConfig;
}

function tokenForm(onToken: (token: string) => void): HTMLElement {
  const input = el("input", { type: "password", placeholder: "bearer token" });
  const form = el("form", { class: "token-form" }, el("label", {}, "Token ", input),
                  el("button", { type: "submit" }, "Sign in"));
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (input.value) onToken(input.value);
  });
  return form;
}

class App {
  private api!: CatalogApi;
  private model!: ModelDoc;
  private identity!: Identity;

  constructor(private readonly root: HTMLElement, private readonly config: ApiConfig) {}

  async start(): Promise<void> {
    const saved = localStorage.getItem(TOKEN_KEY);
    if (!saved) {
      this.root.replaceChildren(
        tokenForm((token) => {
          localStorage.setItem(TOKEN_KEY, token);
          void this.start();
        }),
      );
      return;
    }
    this.api = new CatalogApi(this.config.api_url, saved);
    try {
      this.identity = await this.api.whoami();
      this.model = (await this.api.getModel()) as ModelDoc;
    } catch (error) {
      localStorage.removeItem(TOKEN_KEY);
      this.root.replaceChildren(
        el("p", { class: "error", role: "alert" },
           error instanceof Error ? error.message : String(error)),
        tokenForm((token) => {
          localStorage.setItem(TOKEN_KEY, token);
          void this.start();
        }),
      );
      return;
    }
    window.addEventListener("hashchange", () => void this.route());
    await this.route();
  }

  private navigate = (schema: string, type: string, rid?: string): void => {
    location.hash = rid ? `#/t/${schema}/${type}/${rid}` : `#/t/${schema}/${type}`;
  };

  private async route(): Promise<void> {
    const parts = location.hash.replace(/^#\/?/, "").split("/").filter(Boolean);
    const sidebar = renderSidebar(this.model, this.navigate);
    const content = el("main", { class: "content" });
    this.root.replaceChildren(
      el("header", {},
         el("h1", {}, `fairlake catalog ${this.model.prefix}`),
         el("p", {}, `${this.identity.display_name} (${this.identity.roles.join(", ")})`)),
      el("div", { class: "layout" }, sidebar, content),
    );
    try {
      content.append(await this.page(parts));
    } catch (error) {
      if (error instanceof ApiError && error.code === "NotFound") {
        content.append(el("p", { class: "not-found", role: "alert" },
                          `Nothing lives at ${location.hash}: ${error.message}`));
        return;
      }
      content.append(el("p", { class: "error", role: "alert" },
                        error instanceof Error ? error.message : String(error)));
    }
  }

  private async page(parts: string[]): Promise<HTMLElement> {
    if (parts[0] === "x" && parts[1]) {
      return renderExecutionDetail(await fetchExecutionDetail(this.api, parts[1]));
    }
    if (parts[0] === "review" && parts[1] && parts[2]) {
      return renderReviewView(this.api, this.model, parts[1], parts[2], {
        storage: localStorage,
      });
    }
    if (parts[0] === "t" && parts[1] && parts[2]) {
      const [, schema, type, rid, mode] = parts;
      if (rid && mode === "edit") {
        const record = await this.api.getRecord(schema!, type!, rid);
        return renderEditForm(this.api, this.model, schema!, type!, record, {
          onSaved: () => this.navigate(schema!, type!, rid),
          onReload: () => void this.route(),
        });
      }
      if (rid) {
        return renderDetailView(this.api, this.model, schema!, type!, rid, this.identity, () => {
          location.hash = `#/t/${schema}/${type}/${rid}/edit`;
        });
      }
      return renderListView(this.api, this.model, schema!, type!, this.navigate);
    }
    return el("p", {}, "Pick an entity type from the sidebar.");
  }
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("index.html must contain <div id=\"app\">");
  const config = await loadConfig();
  await new App(root, config).start();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot().catch((error) => console.error(error));
}
