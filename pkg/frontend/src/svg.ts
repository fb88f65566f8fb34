/**
 * Self-contained SVG renderer for learning curves: a shaded standard-error
 * band and a line per method, axes with ticks, and a legend.
 *
 * Point markers carry the underlying numbers as data attributes
 * (data-update / data-mean / data-stderr), so the plotted values can be read
 * back from the image exactly — coordinates alone would only recover them up
 * to the axis transform.
 */

import { Curve } from "./curves";

export interface RenderOptions {
  metric: string;
  width?: number;
  height?: number;
  title?: string;
}

const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
];

const MARGIN = { left: 62, right: 16, top: 26, bottom: 46 };

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function formatTick(value: number): string {
  if (value === 0) return "0";
  const abs = Math.abs(value);
  if (abs >= 1000) return value.toFixed(0);
  if (abs >= 1) return String(Number(value.toFixed(2)));
  return String(Number(value.toFixed(3)));
}

function ticks(lo: number, hi: number, count: number): number[] {
  if (hi === lo) return [lo];
  const out: number[] = [];
  for (let i = 0; i < count; i++) {
    out.push(lo + ((hi - lo) * i) / (count - 1));
  }
  return out;
}

export function renderSvg(curves: Curve[], options: RenderOptions): string {
  const width = options.width ?? 640;
  const height = options.height ?? 420;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const allUpdates = curves.flatMap((c) => c.points.map((p) => p.update));
  const allLo = curves.flatMap((c) => c.points.map((p) => p.mean - p.stderr));
  const allHi = curves.flatMap((c) => c.points.map((p) => p.mean + p.stderr));
  let xLo = Math.min(...allUpdates);
  let xHi = Math.max(...allUpdates);
  let yLo = Math.min(...allLo);
  let yHi = Math.max(...allHi);
  if (xHi === xLo) {
    xLo -= 0.5;
    xHi += 0.5;
  }
  if (yHi === yLo) {
    yLo -= 0.5;
    yHi += 0.5;
  } else {
    const pad = 0.05 * (yHi - yLo);
    yLo -= pad;
    yHi += pad;
  }

  const sx = (u: number): number => MARGIN.left + ((u - xLo) / (xHi - xLo)) * plotW;
  const sy = (v: number): number => MARGIN.top + (1 - (v - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  if (options.title) {
    parts.push(
      `<text x="${width / 2}" y="16" text-anchor="middle" font-size="14">` +
        `${escapeXml(options.title)}</text>`,
    );
  }

  // axes and ticks
  const axisColor = "#444";
  const x0 = MARGIN.left;
  const y0 = MARGIN.top + plotH;
  parts.push(
    `<line x1="${x0}" y1="${y0}" x2="${x0 + plotW}" y2="${y0}" stroke="${axisColor}"/>`,
  );
  parts.push(
    `<line x1="${x0}" y1="${MARGIN.top}" x2="${x0}" y2="${y0}" stroke="${axisColor}"/>`,
  );
  for (const tick of ticks(xLo, xHi, 5)) {
    const x = sx(tick);
    parts.push(`<line x1="${x}" y1="${y0}" x2="${x}" y2="${y0 + 4}" stroke="${axisColor}"/>`);
    parts.push(
      `<text x="${x}" y="${y0 + 18}" text-anchor="middle" fill="${axisColor}">` +
        `${formatTick(tick)}</text>`,
    );
  }
  for (const tick of ticks(yLo, yHi, 5)) {
    const y = sy(tick);
    parts.push(`<line x1="${x0 - 4}" y1="${y}" x2="${x0}" y2="${y}" stroke="${axisColor}"/>`);
    parts.push(
      `<text x="${x0 - 7}" y="${y + 4}" text-anchor="end" fill="${axisColor}">` +
        `${formatTick(tick)}</text>`,
    );
  }
  parts.push(
    `<text x="${x0 + plotW / 2}" y="${height - 8}" text-anchor="middle" fill="${axisColor}">` +
      `student updates</text>`,
  );
  parts.push(
    `<text x="14" y="${MARGIN.top + plotH / 2}" text-anchor="middle" fill="${axisColor}" ` +
      `transform="rotate(-90 14 ${MARGIN.top + plotH / 2})">${escapeXml(options.metric)}</text>`,
  );

  // curves: band below line below markers
  curves.forEach((curve, i) => {
    const color = PALETTE[i % PALETTE.length];
    const method = escapeXml(curve.method);
    const upper = curve.points.map((p) => `${sx(p.update)},${sy(p.mean + p.stderr)}`);
    const lower = [...curve.points]
      .reverse()
      .map((p) => `${sx(p.update)},${sy(p.mean - p.stderr)}`);
    parts.push(
      `<path class="curve-band" data-method="${method}" d="M ${upper.join(" L ")} ` +
        `L ${lower.join(" L ")} Z" fill="${color}" fill-opacity="0.18" stroke="none"/>`,
    );
    const line = curve.points.map((p) => `${sx(p.update)},${sy(p.mean)}`).join(" ");
    parts.push(
      `<polyline class="curve-line" data-method="${method}" points="${line}" ` +
        `fill="none" stroke="${color}" stroke-width="1.8"/>`,
    );
    for (const p of curve.points) {
      parts.push(
        `<circle class="curve-point" data-method="${method}" data-update="${p.update}" ` +
          `data-mean="${p.mean}" data-stderr="${p.stderr}" cx="${sx(p.update)}" ` +
          `cy="${sy(p.mean)}" r="2.5" fill="${color}"/>`,
      );
    }
  });

  // legend
  curves.forEach((curve, i) => {
    const color = PALETTE[i % PALETTE.length];
    const y = MARGIN.top + 8 + 16 * i;
    const x = MARGIN.left + plotW - 150;
    const note = curve.singleSeed
      ? " (single seed: band = 0)"
      : ` (${curve.seeds.length} seeds)`;
    parts.push(
      `<line x1="${x}" y1="${y}" x2="${x + 18}" y2="${y}" stroke="${color}" stroke-width="2"/>`,
    );
    parts.push(
      `<text class="legend-label" x="${x + 24}" y="${y + 4}">` +
        `${escapeXml(curve.method + note)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n");
}
