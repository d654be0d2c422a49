/** Typed client for the msgtriage HTTP API. The dashboard consumes these
 * endpoints and nothing else; every number on screen traces back to one
 * field of one of these payloads. */

export interface OverviewPayload {
  messageVolume: number;
  encounterVolume: number;
  callVolume: number;
  handledCallVolume: number;
  conversionRate: number | null;
  conversionRatePerTeam: Record<string, number | null>;
  routingDistribution: Record<string, number>;
}

export interface QueryFilters {
  team?: string;
  office?: string;
  from?: string;
  to?: string;
}

export interface DistributionItem {
  label: string;
  count: number;
  share: number;
  /** present when level == "leaf": the level-1 ancestor, for drill-down */
  level1?: string;
}

export interface DistributionPayload {
  level: string;
  granularity: string;
  filters: { team: string | null; office: string | null; from: string | null; to: string | null };
  total: number;
  items: DistributionItem[];
}

export interface TrendPayload {
  level: string;
  granularity: string;
  filters: DistributionPayload["filters"];
  buckets: string[];
  series: Record<string, number[]>;
}

export interface StageTallyPayload {
  total: number;
  stage1_classified: number;
  stage1_other: number;
  stage2_classified: number;
  stage2_other: number;
  stage3_classified: number;
  stage3_other: number;
}

export interface ModelReport {
  model: string;
  accuracy: number;
  weightedF1: number;
  macroF1: number;
  perClassF1: Record<string, number>;
  perClassSupport: Record<string, number>;
  nEvaluated: number;
  stageTally: StageTallyPayload | null;
  totalInferenceTime: number;
  perStageInferenceTime: Record<string, number>;
  gatewayErrors: number;
}

export interface ReportsPayload {
  reports: ModelReport[];
  failures: Record<string, string>;
}

export interface HeatmapPayload {
  labels: string[];
  models: string[];
  values: number[][];
}

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiRequestError";
  }
}

function toQuery(params: Record<string, string | undefined>): string {
  const search = new URLSearchParams();
  for (const [key, value] of Object.entries(params)) {
    if (value !== undefined && value !== "") search.set(key, value);
  }
  const text = search.toString();
  return text ? `?${text}` : "";
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private token: string | null = null,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async get<T>(path: string, params: Record<string, string | undefined> = {}): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["X-Api-Token"] = this.token;
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path + toQuery(params), { headers });
    } catch (err) {
      throw new ApiRequestError(0, "unreachable", `API unreachable: ${String(err)}`);
    }
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const error = body?.error ?? {};
      throw new ApiRequestError(
        response.status,
        error.code ?? "http_error",
        error.message ?? `request failed with status ${response.status}`,
      );
    }
    return body as T;
  }

  overview(): Promise<OverviewPayload> {
    return this.get("/api/v1/overview");
  }

  distribution(level: string, filters: QueryFilters = {}): Promise<DistributionPayload> {
    return this.get("/api/v1/topics/distribution", { level, ...filters });
  }

  trend(level: string, filters: QueryFilters = {}): Promise<TrendPayload> {
    return this.get("/api/v1/topics/trend", { level, ...filters });
  }

  reports(): Promise<ReportsPayload> {
    return this.get("/api/v1/models/reports");
  }

  heatmap(): Promise<HeatmapPayload> {
    return this.get("/api/v1/models/heatmap");
  }
}

/** Drops responses that arrive after a newer request for the same widget. */
export class RequestGate {
  private sequence = new Map<string, number>();

  async run<T>(widget: string, job: () => Promise<T>): Promise<T | undefined> {
    const id = (this.sequence.get(widget) ?? 0) + 1;
    this.sequence.set(widget, id);
    const result = await job();
    if (this.sequence.get(widget) !== id) return undefined; // superseded
    return result;
  }
}
