/** Pure builders turning API payloads into what each widget displays.
 *
 * These never aggregate, never do arithmetic on counts: every value is one
 * API field copied through (the contract tests assert exactly that). The
 * only "logic" allowed here is selection and reshaping.
 */
import type {
  DistributionItem,
  DistributionPayload,
  HeatmapPayload,
  ModelReport,
  OverviewPayload,
  ReportsPayload,
  TrendPayload,
} from "./api";

export interface Card {
  id: string;
  label: string;
  value: number | null;
}

export function overviewCards(payload: OverviewPayload): Card[] {
  return [
    { id: "messageVolume", label: "Staff messages", value: payload.messageVolume },
    { id: "encounterVolume", label: "Encounters", value: payload.encounterVolume },
    { id: "callVolume", label: "Inbound calls", value: payload.callVolume },
    { id: "handledCallVolume", label: "Handled calls", value: payload.handledCallVolume },
    { id: "conversionRate", label: "Conversion rate", value: payload.conversionRate },
  ];
}

export interface ConversionRow {
  team: string;
  rate: number | null;
}

export function conversionRows(payload: OverviewPayload): ConversionRow[] {
  return Object.entries(payload.conversionRatePerTeam).map(([team, rate]) => ({ team, rate }));
}

export interface RoutingRow {
  pool: string;
  count: number;
}

export function routingRows(payload: OverviewPayload): RoutingRow[] {
  return Object.entries(payload.routingDistribution).map(([pool, count]) => ({ pool, count }));
}

export interface DistributionChart {
  labels: string[];
  counts: number[];
  shares: number[];
  total: number;
}

export function distributionChart(payload: DistributionPayload): DistributionChart {
  return {
    labels: payload.items.map((item) => item.label),
    counts: payload.items.map((item) => item.count),
    shares: payload.items.map((item) => item.share),
    total: payload.total,
  };
}

/** Leaf items under one level-1 root; pure selection, no re-counting.
 * The "Other" slice is its own root and stays visible either way. */
export function drillItems(payload: DistributionPayload, root: string): DistributionItem[] {
  return payload.items.filter((item) => item.level1 === root);
}

export interface TrendChart {
  buckets: string[];
  datasets: { label: string; data: number[] }[];
}

export function trendChart(payload: TrendPayload, labels?: string[]): TrendChart {
  const wanted = labels ?? Object.keys(payload.series);
  return {
    buckets: payload.buckets,
    datasets: wanted
      .filter((label) => label in payload.series)
      .map((label) => ({ label, data: payload.series[label] })),
  };
}

export interface ModelRow {
  model: string;
  weightedF1: number;
  accuracy: number;
  macroF1: number;
  nEvaluated: number;
  totalInferenceTime: number;
  gatewayErrors: number;
  unclassified: number | null;
}

export function modelRows(payload: ReportsPayload): ModelRow[] {
  return payload.reports.map((report: ModelReport) => ({
    model: report.model,
    weightedF1: report.weightedF1,
    accuracy: report.accuracy,
    macroF1: report.macroF1,
    nEvaluated: report.nEvaluated,
    totalInferenceTime: report.totalInferenceTime,
    gatewayErrors: report.gatewayErrors,
    unclassified: report.stageTally ? report.stageTally.stage3_other : null,
  }));
}

export interface HeatmapGrid {
  labels: string[];
  models: string[];
  values: number[][];
}

export function heatmapGrid(payload: HeatmapPayload): HeatmapGrid {
  return { labels: payload.labels, models: payload.models, values: payload.values };
}

export interface FailureRow {
  model: string;
  error: string;
}

export function failureRows(payload: ReportsPayload): FailureRow[] {
  return Object.entries(payload.failures).map(([model, error]) => ({ model, error }));
}
