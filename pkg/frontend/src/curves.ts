/**
 * Seed-averaged learning curves from metrics rows.
 *
 * One curve per method, built from the `__mean__` rows only. Updates are
 * inner-joined across that method's seeds, so every plotted point averages
 * the same number of runs; the band is the standard error of the mean
 * (sample standard deviation with the n-1 denominator, divided by sqrt(n)).
 * A single-seed curve has no spread to estimate, so its band is drawn with
 * width zero and flagged for the legend.
 */

import { MetricsRow, SchemaError } from "./csv";

export type MetricName = "solve_rate" | "mean_return";

export const METRIC_NAMES: readonly MetricName[] = ["solve_rate", "mean_return"];

export interface CurvePoint {
  update: number;
  mean: number;
  stderr: number;
  nSeeds: number;
}

export interface Curve {
  method: string;
  seeds: number[];
  points: CurvePoint[];
  singleSeed: boolean;
}

function metricValue(row: MetricsRow, metric: MetricName): number {
  return metric === "solve_rate" ? row.solveRate : row.meanReturn;
}

export function buildCurves(rows: MetricsRow[], metric: MetricName): Curve[] {
  const meanRows = rows.filter((row) => row.levelName === "__mean__");
  if (meanRows.length === 0) {
    throw new SchemaError('no "__mean__" rows to plot');
  }

  // method -> seed -> update -> value
  const byMethod = new Map<string, Map<number, Map<number, number>>>();
  for (const row of meanRows) {
    let bySeed = byMethod.get(row.method);
    if (!bySeed) {
      bySeed = new Map();
      byMethod.set(row.method, bySeed);
    }
    let byUpdate = bySeed.get(row.seed);
    if (!byUpdate) {
      byUpdate = new Map();
      bySeed.set(row.seed, byUpdate);
    }
    byUpdate.set(row.update, metricValue(row, metric));
  }

  const curves: Curve[] = [];
  for (const method of [...byMethod.keys()].sort()) {
    const bySeed = byMethod.get(method)!;
    const seeds = [...bySeed.keys()].sort((a, b) => a - b);

    let shared: number[] | null = null;
    for (const seed of seeds) {
      const updates = new Set(bySeed.get(seed)!.keys());
      shared = shared === null
        ? [...updates]
        : shared.filter((u) => updates.has(u));
    }
    const updates = (shared ?? []).sort((a, b) => a - b);

    const points: CurvePoint[] = updates.map((update) => {
      const values = seeds.map((seed) => bySeed.get(seed)!.get(update)!);
      const n = values.length;
      const mean = values.reduce((acc, v) => acc + v, 0) / n;
      let stderr = 0;
      if (n > 1) {
        const squares = values.reduce((acc, v) => acc + (v - mean) ** 2, 0);
        stderr = Math.sqrt(squares / (n - 1)) / Math.sqrt(n);
      }
      return { update, mean, stderr, nSeeds: n };
    });

    curves.push({ method, seeds, points, singleSeed: seeds.length === 1 });
  }
  return curves;
}
