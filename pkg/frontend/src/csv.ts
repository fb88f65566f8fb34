/**
 * Reader for the training-metrics CSV written by the Python trainer.
 *
 * File contract: a header row
 *   update,wall_clock_s,method,metric,seed,level_name,solve_rate,mean_return
 * followed by one row per (update, eval level). The `__mean__` pseudo-level
 * carries the cross-level average that learning curves are drawn from.
 * Fields are plain (never quoted, never contain commas), numbers are written
 * in round-trip precision.
 */

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface MetricsRow {
  update: number;
  wallClockS: number;
  method: string;
  metric: string;
  seed: number;
  levelName: string;
  solveRate: number;
  meanReturn: number;
}

export const REQUIRED_COLUMNS = [
  "update",
  "wall_clock_s",
  "method",
  "metric",
  "seed",
  "level_name",
  "solve_rate",
  "mean_return",
] as const;

function parseNumber(raw: string, column: string, source: string, line: number): number {
  const value = Number(raw);
  if (raw.trim() === "" || !Number.isFinite(value)) {
    throw new SchemaError(
      `${source}:${line}: column "${column}" is not a finite number: "${raw}"`,
    );
  }
  return value;
}

/** Parse one metrics file. Raises SchemaError when the header is missing a
 * required column, a numeric field does not parse, or the file holds no data
 * rows at all. */
export function parseMetricsCsv(text: string, source = "<string>"): MetricsRow[] {
  const lines = text
    .split(/\r?\n/)
    .filter((line) => line.trim() !== "");
  if (lines.length === 0) {
    throw new SchemaError(`${source}: empty file`);
  }
  const header = lines[0].split(",").map((h) => h.trim());
  const index = new Map(header.map((name, i) => [name, i]));
  for (const column of REQUIRED_COLUMNS) {
    if (!index.has(column)) {
      throw new SchemaError(`${source}: missing required column "${column}"`);
    }
  }
  if (lines.length === 1) {
    throw new SchemaError(`${source}: no data rows`);
  }

  const rows: MetricsRow[] = [];
  for (let i = 1; i < lines.length; i++) {
    const fields = lines[i].split(",");
    if (fields.length !== header.length) {
      throw new SchemaError(
        `${source}:${i + 1}: expected ${header.length} fields, got ${fields.length}`,
      );
    }
    const get = (column: string): string => fields[index.get(column)!];
    const num = (column: string): number => parseNumber(get(column), column, source, i + 1);
    rows.push({
      update: num("update"),
      wallClockS: num("wall_clock_s"),
      method: get("method"),
      metric: get("metric"),
      seed: num("seed"),
      levelName: get("level_name"),
      solveRate: num("solve_rate"),
      meanReturn: num("mean_return"),
    });
  }
  return rows;
}
