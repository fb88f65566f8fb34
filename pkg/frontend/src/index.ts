export { MetricsRow, parseMetricsCsv, REQUIRED_COLUMNS, SchemaError } from "./csv";
export { buildCurves, Curve, CurvePoint, METRIC_NAMES, MetricName } from "./curves";
export { renderSvg, RenderOptions } from "./svg";
export { CliOptions, main, parseArgs, UsageError } from "./cli";
