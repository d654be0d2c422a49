/** Pass-through fidelity: every widget value must be one API field, verbatim. */
import { describe, expect, it } from "vitest";

import type {
  DistributionPayload,
  HeatmapPayload,
  OverviewPayload,
  ReportsPayload,
  TrendPayload,
} from "../src/api";
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
} from "../src/viewmodel";
import fixtures from "./fixtures.json";

const overview = fixtures.overview as OverviewPayload;
const distLevel1 = fixtures.distributionLevel1 as DistributionPayload;
const distLeaf = fixtures.distributionLeaf as DistributionPayload;
const trendLevel1 = fixtures.trendLevel1 as TrendPayload;
const reports = fixtures.reports as ReportsPayload;
const heatmap = fixtures.heatmap as HeatmapPayload;

describe("overview widgets", () => {
  it("cards show the exact API fields", () => {
    const byId = Object.fromEntries(overviewCards(overview).map((c) => [c.id, c.value]));
    expect(byId.messageVolume).toBe(overview.messageVolume);
    expect(byId.encounterVolume).toBe(overview.encounterVolume);
    expect(byId.callVolume).toBe(overview.callVolume);
    expect(byId.handledCallVolume).toBe(overview.handledCallVolume);
    expect(byId.conversionRate).toBe(overview.conversionRate);
  });

  it("conversion table mirrors conversionRatePerTeam", () => {
    const rows = conversionRows(overview);
    expect(Object.fromEntries(rows.map((r) => [r.team, r.rate]))).toEqual(
      overview.conversionRatePerTeam,
    );
  });

  it("routing table mirrors routingDistribution", () => {
    const rows = routingRows(overview);
    expect(Object.fromEntries(rows.map((r) => [r.pool, r.count]))).toEqual(
      overview.routingDistribution,
    );
  });
});

describe("topic widgets", () => {
  it("distribution chart copies labels, counts, shares, and total", () => {
    const chart = distributionChart(distLevel1);
    expect(chart.labels).toEqual(distLevel1.items.map((i) => i.label));
    expect(chart.counts).toEqual(distLevel1.items.map((i) => i.count));
    expect(chart.shares).toEqual(distLevel1.items.map((i) => i.share));
    expect(chart.total).toBe(distLevel1.total);
  });

  it("level-1 keys are exactly the two roots plus Other", () => {
    expect(distLevel1.items.map((i) => i.label)).toEqual([
      "Clinical Reason",
      "Non-clinical Reason",
      "Other",
    ]);
  });

  it("trend chart datasets are the series arrays unchanged", () => {
    const chart = trendChart(trendLevel1);
    expect(chart.buckets).toEqual(trendLevel1.buckets);
    for (const dataset of chart.datasets) {
      expect(dataset.data).toBe(trendLevel1.series[dataset.label]);
    }
  });

  it("drill selection filters without recounting", () => {
    const items = drillItems(distLeaf, "Clinical Reason");
    expect(items.length).toBeGreaterThan(0);
    for (const item of items) {
      expect(item.level1).toBe("Clinical Reason");
      const original = distLeaf.items.find((i) => i.label === item.label);
      expect(item.count).toBe(original?.count);
    }
  });
});

describe("model widgets", () => {
  it("model rows copy report fields", () => {
    const rows = modelRows(reports);
    expect(rows.length).toBe(reports.reports.length);
    rows.forEach((row, i) => {
      const report = reports.reports[i];
      expect(row.model).toBe(report.model);
      expect(row.weightedF1).toBe(report.weightedF1);
      expect(row.accuracy).toBe(report.accuracy);
      expect(row.macroF1).toBe(report.macroF1);
      expect(row.nEvaluated).toBe(report.nEvaluated);
      expect(row.totalInferenceTime).toBe(report.totalInferenceTime);
      expect(row.unclassified).toBe(report.stageTally?.stage3_other ?? null);
    });
  });

  it("ranking arrives sorted from the API and is not re-sorted", () => {
    const scores = modelRows(reports).map((r) => r.weightedF1);
    expect(scores).toEqual([...scores].sort((a, b) => b - a));
  });

  it("heatmap grid passes the matrix through", () => {
    const grid = heatmapGrid(heatmap);
    expect(grid.labels).toEqual(heatmap.labels);
    expect(grid.models).toEqual(heatmap.models);
    expect(grid.values).toEqual(heatmap.values);
  });

  it("failures become rows", () => {
    expect(failureRows(reports)).toEqual(
      Object.entries(reports.failures).map(([model, error]) => ({ model, error })),
    );
  });
});
