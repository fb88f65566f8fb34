#!/usr/bin/env node
/**
 * plot-curves: learning-curve figure from one or more metrics CSVs.
 *
 *   plot-curves run1/metrics.csv run2/metrics.csv --metric solve_rate --out curves.svg
 *
 * Rows from all files are pooled; seeds come from the CSV's own seed column.
 * The output is an SVG image. Inputs are only ever read.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { MetricsRow, parseMetricsCsv, SchemaError } from "./csv";
import { buildCurves, METRIC_NAMES, MetricName } from "./curves";
import { renderSvg } from "./svg";

export interface CliOptions {
  csvPaths: string[];
  metric: MetricName;
  out: string;
}

export class UsageError extends Error {}

export function parseArgs(argv: string[]): CliOptions {
  const csvPaths: string[] = [];
  let metric: string | null = null;
  let out: string | null = null;
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--metric" || arg === "--out") {
      const value = argv[i + 1];
      if (value === undefined) {
        throw new UsageError(`${arg} needs a value`);
      }
      if (arg === "--metric") metric = value;
      else out = value;
      i++;
    } else if (arg.startsWith("--")) {
      throw new UsageError(`unknown flag ${arg}`);
    } else {
      csvPaths.push(arg);
    }
  }
  if (csvPaths.length === 0) {
    throw new UsageError("at least one metrics CSV path is required");
  }
  if (out === null) {
    throw new UsageError("--out is required");
  }
  if (metric === null || !(METRIC_NAMES as readonly string[]).includes(metric)) {
    throw new UsageError(`--metric must be one of: ${METRIC_NAMES.join(", ")}`);
  }
  return { csvPaths, metric: metric as MetricName, out };
}

export function main(argv: string[]): number {
  try {
    const options = parseArgs(argv);
    const rows: MetricsRow[] = [];
    for (const path of options.csvPaths) {
      rows.push(...parseMetricsCsv(readFileSync(path, "utf8"), path));
    }
    const curves = buildCurves(rows, options.metric);
    const svg = renderSvg(curves, { metric: options.metric });
    writeFileSync(options.out, svg);
    const seeds = new Set(curves.flatMap((c) => c.seeds)).size;
    console.log(
      `wrote ${options.out}: ${curves.length} curve(s), ${seeds} seed(s), metric ${options.metric}`,
    );
    return 0;
  } catch (error) {
    if (
      error instanceof UsageError ||
      error instanceof SchemaError ||
      (error as NodeJS.ErrnoException).code !== undefined
    ) {
      console.error(`plot-curves: ${(error as Error).message}`);
      return 1;
    }
    throw error;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
