/** DOM layer: builds the controls for a source, runs the session, renders
 * pages. All backend traffic goes through the Gateway passed in, so tests
 * drive the whole thing with a fake fetch. */

import {
  ApiError,
  Gateway,
  isNumeric,
  type PageDoc,
  type SourceInfo,
} from "./api.js";
import {
  WEIGHT_MAX,
  WEIGHT_MIN,
  WEIGHT_STEP,
  buildQueryBody,
  clampWeight,
  detailUrl,
  draftPredicates,
  formatCell,
  formatScore,
  formatStats,
  type FilterDraft,
} from "./state.js";

const SKELETON = `
  <header>
    <h1>rankgate</h1>
    <label>source
      <select id="source-select"></select>
    </label>
  </header>
  <section id="controls">
    <div id="presets"></div>
    <div id="sliders"></div>
    <details id="filter-box">
      <summary>filters</summary>
      <div id="filters"></div>
    </details>
    <button id="submit">search</button>
  </section>
  <p id="error" hidden></p>
  <section id="results" hidden>
    <table>
      <thead></thead>
      <tbody></tbody>
    </table>
    <button id="more">get next page</button>
    <p id="stats"></p>
  </section>
`;

export class App {
  sources: SourceInfo[] = [];
  current: SourceInfo | null = null;
  sessionId: string | null = null;
  /** Resolves when the most recent button-triggered call settles. */
  pending: Promise<void> = Promise.resolve();

  constructor(
    private readonly root: HTMLElement,
    private readonly gw: Gateway,
    private readonly pageSize = 10,
  ) {}

  async init(): Promise<void> {
    this.root.innerHTML = SKELETON;
    this.el("#submit").addEventListener("click", () => {
      this.pending = this.submit();
    });
    this.el("#more").addEventListener("click", () => {
      this.pending = this.nextPage();
    });
    const select = this.el<HTMLSelectElement>("#source-select");
    select.addEventListener("change", () => this.selectSource(select.value));

    this.sources = await this.gw.listSources();
    for (const s of this.sources) {
      const opt = document.createElement("option");
      opt.value = s.source_id;
      opt.textContent = s.name;
      select.append(opt);
    }
    const first = this.sources[0];
    if (first) this.selectSource(first.source_id);
  }

  selectSource(sourceId: string): void {
    const source = this.sources.find((s) => s.source_id === sourceId);
    if (!source) return;
    this.current = source;
    this.sessionId = null;
    this.buildPresets(source);
    this.buildSliders(source);
    this.buildFilters(source);
    this.clearResults();
    this.clearError();
  }

  // controls ---------------------------------------------------------------

  private buildPresets(source: SourceInfo): void {
    const box = this.el("#presets");
    box.textContent = "";
    for (const preset of source.popular_functions) {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.className = "preset";
      btn.textContent = preset.label;
      btn.addEventListener("click", () => {
        for (const attr of source.attributes) {
          if (isNumeric(attr)) {
            this.setWeight(attr.name, preset.weights[attr.name] ?? 0);
          }
        }
      });
      box.append(btn);
    }
  }

  private buildSliders(source: SourceInfo): void {
    const box = this.el("#sliders");
    box.textContent = "";
    for (const attr of source.attributes) {
      if (!isNumeric(attr)) continue;
      const row = document.createElement("label");
      row.className = "weight-row";

      const name = document.createElement("span");
      name.textContent = attr.name;

      const slider = document.createElement("input");
      slider.type = "range";
      slider.className = "weight-slider";
      slider.dataset.attr = attr.name;
      slider.min = String(WEIGHT_MIN);
      slider.max = String(WEIGHT_MAX);
      slider.step = String(WEIGHT_STEP);
      slider.value = "0";

      const entry = document.createElement("input");
      entry.type = "number";
      entry.className = "weight-entry";
      entry.dataset.attr = attr.name;
      entry.min = String(WEIGHT_MIN);
      entry.max = String(WEIGHT_MAX);
      entry.step = String(WEIGHT_STEP);
      entry.value = "0";

      slider.addEventListener("input", () => {
        entry.value = slider.value;
      });
      entry.addEventListener("change", () => {
        this.setWeight(attr.name, clampWeight(parseFloat(entry.value)));
      });

      row.append(name, slider, entry);
      box.append(row);
    }
  }

  private buildFilters(source: SourceInfo): void {
    const box = this.el("#filters");
    box.textContent = "";
    for (const attr of source.attributes) {
      const row = document.createElement("label");
      row.className = "filter-row";
      const name = document.createElement("span");
      name.textContent = attr.name;
      row.append(name);
      if (isNumeric(attr)) {
        for (const bound of ["lo", "hi"] as const) {
          const input = document.createElement("input");
          input.type = "number";
          input.className = `filter-${bound}`;
          input.dataset.attr = attr.name;
          input.placeholder = bound === "lo"
            ? String(attr.min ?? "") : String(attr.max ?? "");
          row.append(input);
        }
      } else {
        const select = document.createElement("select");
        select.className = "filter-equals";
        select.dataset.attr = attr.name;
        select.append(document.createElement("option"));
        for (const cat of attr.categories ?? []) {
          const opt = document.createElement("option");
          opt.value = cat;
          opt.textContent = cat;
          select.append(opt);
        }
        row.append(select);
      }
      box.append(row);
    }
  }

  setWeight(attr: string, w: number): void {
    const value = String(clampWeight(w));
    const pick = (cls: string) =>
      this.root.querySelector<HTMLInputElement>(
        `.${cls}[data-attr="${attr}"]`);
    const slider = pick("weight-slider");
    const entry = pick("weight-entry");
    if (slider) slider.value = value;
    if (entry) entry.value = value;
  }

  readWeights(): Record<string, number> {
    const out: Record<string, number> = {};
    for (const slider of this.root.querySelectorAll<HTMLInputElement>(
        ".weight-slider")) {
      out[slider.dataset.attr ?? ""] = clampWeight(parseFloat(slider.value));
    }
    return out;
  }

  readFilters(): Map<string, FilterDraft> {
    const drafts = new Map<string, FilterDraft>();
    const upsert = (attr: string): FilterDraft => {
      let d = drafts.get(attr);
      if (!d) {
        d = {};
        drafts.set(attr, d);
      }
      return d;
    };
    for (const input of this.root.querySelectorAll<HTMLInputElement>(
        ".filter-lo, .filter-hi")) {
      if (input.value === "") continue;
      const draft = upsert(input.dataset.attr ?? "");
      const n = parseFloat(input.value);
      if (input.classList.contains("filter-lo")) draft.lo = n;
      else draft.hi = n;
    }
    for (const select of this.root.querySelectorAll<HTMLSelectElement>(
        ".filter-equals")) {
      if (select.value !== "") upsert(select.dataset.attr ?? "").equals = select.value;
    }
    return drafts;
  }

  // session ----------------------------------------------------------------

  async submit(): Promise<void> {
    const source = this.current;
    if (!source) return;
    this.clearError();
    try {
      if (this.sessionId === null) {
        this.sessionId = (await this.gw.openSession(source.source_id)).session_id;
      }
      const body = buildQueryBody(
        this.readWeights(),
        draftPredicates(source.attributes, this.readFilters()),
        this.pageSize,
      );
      const page = await this.gw.query(this.sessionId, body);
      this.renderPage(page, true);
    } catch (err) {
      this.showError(err);
    }
  }

  async nextPage(): Promise<void> {
    if (this.sessionId === null) return;
    this.clearError();
    try {
      const page = await this.gw.next(this.sessionId);
      this.renderPage(page, false);
    } catch (err) {
      this.showError(err);
    }
  }

  // rendering --------------------------------------------------------------

  private renderPage(page: PageDoc, fresh: boolean): void {
    const source = this.current;
    if (!source) return;
    const results = this.el("#results");
    results.hidden = false;
    const thead = results.querySelector("thead")!;
    const tbody = results.querySelector("tbody")!;
    if (fresh) {
      tbody.textContent = "";
      const tr = document.createElement("tr");
      for (const text of ["id", "score",
        ...source.attributes.map((a) => a.name)]) {
        const th = document.createElement("th");
        th.textContent = text;
        tr.append(th);
      }
      thead.textContent = "";
      thead.append(tr);
    }
    for (const t of page.tuples) {
      const tr = document.createElement("tr");
      const idCell = document.createElement("td");
      if (source.detail_url_template) {
        const a = document.createElement("a");
        a.href = detailUrl(source.detail_url_template, t.id);
        a.textContent = t.id;
        idCell.append(a);
      } else {
        idCell.textContent = t.id;
      }
      tr.append(idCell);
      const score = document.createElement("td");
      score.textContent = formatScore(t.score);
      tr.append(score);
      for (const attr of source.attributes) {
        const td = document.createElement("td");
        td.textContent = formatCell(t.values[attr.name] ?? "");
        tr.append(td);
      }
      tbody.append(tr);
    }
    this.el<HTMLButtonElement>("#more").disabled = page.exhausted;
    this.el("#stats").textContent = formatStats(page.stats);
  }

  private clearResults(): void {
    const results = this.el("#results");
    results.hidden = true;
    results.querySelector("tbody")!.textContent = "";
    this.el("#stats").textContent = "";
  }

  private showError(err: unknown): void {
    const box = this.el("#error");
    box.hidden = false;
    if (err instanceof ApiError) {
      box.textContent = err.field
        ? `${err.code}: ${err.message} (${err.field})`
        : `${err.code}: ${err.message}`;
    } else {
      box.textContent = String(err);
    }
  }

  private clearError(): void {
    const box = this.el("#error");
    box.hidden = true;
    box.textContent = "";
  }

  private el<T extends HTMLElement = HTMLElement>(selector: string): T {
    const found = this.root.querySelector<T>(selector);
    if (!found) throw new Error(`missing element ${selector}`);
    return found;
  }
}

export async function mountApp(
  root: HTMLElement,
  gw: Gateway,
  pageSize = 10,
): Promise<App> {
  const app = new App(root, gw, pageSize);
  await app.init();
  return app;
}
