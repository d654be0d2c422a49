/** DOM layer: builds each page from view-models and wires interactions.
 * Values print verbatim from the view-model (full precision in tooltips);
 * aggregates are never computed here. */
import type { ApiClient, DistributionPayload } from "./api";
import { ApiRequestError, RequestGate } from "./api";
import { distributionBar, trendLines } from "./charts";
import type { ViewState } from "./state";
import { filtersOf } from "./state";
import {
  conversionRows,
  distributionChart,
  drillItems,
  failureRows,
  heatmapGrid,
  modelRows,
  overviewCards,
  routingRows,
  trendChart,
} from "./viewmodel";

type Attrs = Record<string, string>;

export function el(
  tag: string,
  attrs: Attrs = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  for (const child of children) node.append(child);
  return node;
}

export function formatCount(value: number): string {
  return String(value);
}

export function formatRate(value: number | null): string {
  return value === null ? "n/a" : value.toFixed(3);
}

export function formatShare(value: number): string {
  return `${(value * 100).toFixed(1)}%`;
}

export function formatSeconds(value: number): string {
  return `${value.toFixed(1)}s`;
}

function loading(): HTMLElement {
  return el("div", { class: "loading" }, ["Loading…"]);
}

function errorBanner(error: unknown): HTMLElement {
  const message =
    error instanceof ApiRequestError
      ? `${error.code}: ${error.message}`
      : `unexpected error: ${String(error)}`;
  return el("div", { class: "error-banner", role: "alert" }, [message]);
}

function section(title: string, ...children: (Node | string)[]): HTMLElement {
  return el("section", { class: "panel" }, [el("h2", {}, [title]), ...children]);
}

function table(headers: string[], rows: (Node | string)[][]): HTMLElement {
  return el("table", {}, [
    el("thead", {}, [el("tr", {}, headers.map((h) => el("th", {}, [h])))]),
    el(
      "tbody",
      {},
      rows.map((cells) => el("tr", {}, cells.map((c) => el("td", {}, [c])))),
    ),
  ]);
}

export async function renderOverview(
  root: HTMLElement,
  api: ApiClient,
  gate: RequestGate,
  state: ViewState,
): Promise<void> {
  root.replaceChildren(loading());
  try {
    const data = await gate.run("overview", async () => {
      const [overview, trend] = await Promise.all([
        api.overview(),
        api.trend(state.level, filtersOf(state)),
      ]);
      return { overview, trend };
    });
    if (!data) return; // superseded by a newer request
    const cards = overviewCards(data.overview).map((card) =>
      el("div", { class: "card", "data-card": card.id }, [
        el("div", { class: "card-value", title: String(card.value) }, [
          card.id === "conversionRate" ? formatRate(card.value) : formatCount(card.value ?? 0),
        ]),
        el("div", { class: "card-label" }, [card.label]),
      ]),
    );
    root.replaceChildren(
      el("div", { class: "cards" }, cards),
      section(
        "Conversion rate by team",
        table(
          ["Team", "Encounters / handled calls"],
          conversionRows(data.overview).map((row) => [row.team, formatRate(row.rate)]),
        ),
      ),
      section(
        "Routing distribution",
        table(
          ["Pool", "Messages"],
          routingRows(data.overview).map((row) => [row.pool, formatCount(row.count)]),
        ),
      ),
      section("Message volume trend", el("canvas", { id: "overview-trend" })),
    );
    const canvas = root.querySelector<HTMLCanvasElement>("#overview-trend")!;
    trendLines(canvas, trendChart(data.trend));
  } catch (error) {
    root.replaceChildren(errorBanner(error));
  }
}

export async function renderTopics(
  root: HTMLElement,
  api: ApiClient,
  gate: RequestGate,
  state: ViewState,
  update: (next: Partial<ViewState>) => void,
): Promise<void> {
  root.replaceChildren(loading());
  try {
    const data = await gate.run("topics", async () => {
      const level = state.root ? "leaf" : state.level;
      const [dist, trend, level1] = await Promise.all([
        api.distribution(level, filtersOf(state)),
        api.trend(level, filtersOf(state)),
        state.root ? api.distribution("1", filtersOf(state)) : Promise.resolve(null),
      ]);
      return { dist, trend, level1 };
    });
    if (!data) return;

    const toggle = el("div", { class: "level-toggle" });
    for (const [value, label] of [
      ["1", "Level 1"],
      ["leaf", "Most granular subtopic"],
    ] as const) {
      const button = el(
        "button",
        { class: state.level === value && !state.root ? "active" : "" },
        [label],
      );
      button.addEventListener("click", () => update({ level: value, root: undefined }));
      toggle.append(button);
    }

    const header: (Node | string)[] = [toggle];
    if (state.root) {
      const parent = data.level1?.items.find((item) => item.label === state.root);
      const back = el("button", { class: "back" }, ["← all topics"]);
      back.addEventListener("click", () => update({ root: undefined }));
      header.push(
        el("div", { class: "drill-note" }, [
          back,
          ` ${state.root} — parent slice: ${parent ? formatCount(parent.count) : "?"} messages`,
        ]),
      );
    }

    const visible: DistributionPayload = state.root
      ? { ...data.dist, items: drillItems(data.dist, state.root) }
      : data.dist;
    const chart = distributionChart(visible);

    const rows = visible.items.map((item) => {
      const row: (Node | string)[] = [
        item.label,
        el("span", { title: String(item.count) }, [formatCount(item.count)]),
        el("span", { title: String(item.share) }, [formatShare(item.share)]),
      ];
      return row;
    });

    root.replaceChildren(
      ...header,
      section(
        state.root ? `Subtopics of ${state.root}` : "Topic distribution",
        el("canvas", { id: "topics-dist" }),
        table(["Topic", "Messages", "Share"], rows),
        el("p", { class: "hint" }, [
          state.root
            ? "Counts come from the leaf-level API response; the parent figure above is the level-1 response."
            : state.level === "1"
              ? "Click a level-1 row to drill into its subtopics."
              : "",
        ]),
      ),
      section("Distribution over time", el("canvas", { id: "topics-trend" })),
    );

    distributionBar(root.querySelector<HTMLCanvasElement>("#topics-dist")!, chart);
    const trendLabels = state.root ? visible.items.map((i) => i.label) : undefined;
    trendLines(
      root.querySelector<HTMLCanvasElement>("#topics-trend")!,
      trendChart(data.trend, trendLabels),
    );

    if (!state.root && state.level === "1") {
      root.querySelectorAll("tbody tr").forEach((tr, index) => {
        const label = visible.items[index]?.label;
        if (!label || label === "Other") return; // Other has no subtopics
        tr.classList.add("clickable");
        tr.addEventListener("click", () => update({ root: label }));
      });
    }
  } catch (error) {
    root.replaceChildren(errorBanner(error));
  }
}

export async function renderModels(
  root: HTMLElement,
  api: ApiClient,
  gate: RequestGate,
): Promise<void> {
  root.replaceChildren(loading());
  try {
    const data = await gate.run("models", async () => {
      const [reports, heatmap] = await Promise.all([api.reports(), api.heatmap()]);
      return { reports, heatmap };
    });
    if (!data) return;
    const rows = modelRows(data.reports).map((row) => [
      row.model,
      el("span", { title: String(row.weightedF1) }, [row.weightedF1.toFixed(3)]),
      el("span", { title: String(row.accuracy) }, [row.accuracy.toFixed(3)]),
      el("span", { title: String(row.macroF1) }, [row.macroF1.toFixed(3)]),
      formatCount(row.nEvaluated),
      row.unclassified === null ? "n/a" : formatCount(row.unclassified),
      formatSeconds(row.totalInferenceTime),
      formatCount(row.gatewayErrors),
    ]);
    const grid = heatmapGrid(data.heatmap);
    const heatRows = grid.labels.map((label, r) => {
      const cells: (Node | string)[] = [label];
      grid.values[r].forEach((value) => {
        const cell = el("span", {
          class: "heat",
          title: String(value),
          style: `background: rgba(37, 99, 235, ${value});`,
        });
        cell.textContent = value.toFixed(2);
        cells.push(cell);
      });
      return cells;
    });
    const failures = failureRows(data.reports);
    root.replaceChildren(
      section(
        "Model ranking (weighted F1, descending)",
        table(
          ["Model", "Weighted F1", "Accuracy", "Macro F1", "Gold N", "Unclassified", "Inference time", "Gateway errors"],
          rows,
        ),
      ),
      section("Per-class F1 heatmap", table(["Class", ...grid.models], heatRows)),
      ...(failures.length
        ? [
            section(
              "Failed models",
              table(["Model", "Error"], failures.map((f) => [f.model, f.error])),
            ),
          ]
        : []),
    );
  } catch (error) {
    root.replaceChildren(errorBanner(error));
  }
}
