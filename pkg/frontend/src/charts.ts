/** Thin chart.js wrappers: grouped/stacked bars for distributions, lines for
 * trends. Data arrives pre-shaped from the view-model layer untouched. */
import {
  BarController,
  BarElement,
  CategoryScale,
  Chart,
  Legend,
  LineController,
  LineElement,
  LinearScale,
  PointElement,
  Tooltip,
} from "chart.js";

import type { DistributionChart, TrendChart } from "./viewmodel";

Chart.register(
  BarController,
  BarElement,
  CategoryScale,
  LinearScale,
  LineController,
  LineElement,
  PointElement,
  Legend,
  Tooltip,
);

const PALETTE = [
  "#2563eb", "#16a34a", "#d97706", "#dc2626", "#7c3aed",
  "#0d9488", "#be185d", "#4d7c0f", "#64748b", "#a855f7",
];

function color(i: number): string {
  return PALETTE[i % PALETTE.length];
}

const live = new Map<HTMLCanvasElement, Chart>();

function replace(canvas: HTMLCanvasElement, build: () => Chart): Chart {
  live.get(canvas)?.destroy();
  const chart = build();
  live.set(canvas, chart);
  return chart;
}

export function distributionBar(canvas: HTMLCanvasElement, data: DistributionChart): Chart {
  return replace(
    canvas,
    () =>
      new Chart(canvas, {
        type: "bar",
        data: {
          labels: data.labels,
          datasets: [
            {
              label: "messages",
              data: data.counts,
              backgroundColor: data.labels.map((_, i) => color(i)),
            },
          ],
        },
        options: {
          responsive: true,
          plugins: { legend: { display: false } },
          scales: { y: { beginAtZero: true, ticks: { precision: 0 } } },
        },
      }),
  );
}

export function trendLines(canvas: HTMLCanvasElement, data: TrendChart): Chart {
  return replace(
    canvas,
    () =>
      new Chart(canvas, {
        type: "line",
        data: {
          labels: data.buckets,
          datasets: data.datasets.map((series, i) => ({
            label: series.label,
            data: series.data,
            borderColor: color(i),
            backgroundColor: color(i),
            tension: 0.2,
            fill: false,
          })),
        },
        options: {
          responsive: true,
          scales: { y: { beginAtZero: true, ticks: { precision: 0 } } },
        },
      }),
  );
}
