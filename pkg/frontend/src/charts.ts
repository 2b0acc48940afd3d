/**
 * Pure SVG builders for the console's charts.
 *
 * Each function turns already-received samples into an SVG string; there is
 * no smoothing, fitting, or other derivation beyond linear scaling into the
 * viewport, so the pictures say exactly what the stream said.
 */

import type { StripPoint } from "./viewmodel.js";

export interface ChartOptions {
  width?: number;
  height?: number;
  stroke?: string;
  /** Series label drawn in the corner (empty string omits it). */
  label?: string;
}

const DEFAULTS = { width: 220, height: 48, stroke: "#2a7ae2", label: "" };

function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

interface Extent {
  tMin: number;
  tMax: number;
  vMin: number;
  vMax: number;
}

function extentOf(series: StripPoint[][]): Extent | null {
  let tMin = Infinity;
  let tMax = -Infinity;
  let vMin = Infinity;
  let vMax = -Infinity;
  for (const span of series) {
    for (const point of span) {
      if (point.t < tMin) tMin = point.t;
      if (point.t > tMax) tMax = point.t;
      if (point.v < vMin) vMin = point.v;
      if (point.v > vMax) vMax = point.v;
    }
  }
  if (!Number.isFinite(tMin) || !Number.isFinite(vMin)) return null;
  if (tMax === tMin) tMax = tMin + 1;
  if (vMax === vMin) {
    vMax += Math.abs(vMax) * 0.05 + 1e-9;
    vMin -= Math.abs(vMin) * 0.05 + 1e-9;
  }
  return { tMin, tMax, vMin, vMax };
}

function polyline(
  points: StripPoint[],
  extent: Extent,
  width: number,
  height: number,
  stroke: string,
  dashed: boolean,
): string {
  const coords = points
    .map((point) => {
      const x =
        ((point.t - extent.tMin) / (extent.tMax - extent.tMin)) * (width - 2) +
        1;
      const y =
        height -
        1 -
        ((point.v - extent.vMin) / (extent.vMax - extent.vMin)) * (height - 2);
      return `${x.toFixed(2)},${y.toFixed(2)}`;
    })
    .join(" ");
  const dash = dashed ? ` stroke-dasharray="4 3"` : "";
  return `<polyline points="${coords}" fill="none" stroke="${stroke}" stroke-width="1.5"${dash}/>`;
}

function svgOpen(width: number, height: number): string {
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${width} ${height}"` +
    ` width="${width}" height="${height}" role="img">`
  );
}

/** Rolling strip for a channel card (one line, newest data to the right). */
export function sparkline(points: StripPoint[], options: ChartOptions = {}): string {
  const { width, height, stroke, label } = { ...DEFAULTS, ...options };
  const parts = [svgOpen(width, height)];
  const extent = extentOf([points]);
  if (extent && points.length > 1) {
    parts.push(polyline(points, extent, width, height, stroke, false));
  } else {
    parts.push(
      `<text x="4" y="${height / 2 + 4}" font-size="10" fill="#888">no samples</text>`,
    );
  }
  if (label) {
    parts.push(
      `<text x="4" y="11" font-size="9" fill="#666">${escapeXml(label)}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

/** Per-trial displacement record: the decay the stream reported. */
export function decayChart(points: StripPoint[], options: ChartOptions = {}): string {
  return sparkline(points, {
    width: options.width ?? 420,
    height: options.height ?? 120,
    stroke: options.stroke ?? "#b5541c",
    label: options.label ?? "displacement_mm vs t_s",
  });
}

/**
 * Pre/post sweep spans overlaid (pre solid, post dashed); intermediate
 * spans, if any, render thin and grey.
 */
export function sweepChart(
  spans: StripPoint[][],
  options: ChartOptions = {},
): string {
  const width = options.width ?? 420;
  const height = options.height ?? 120;
  const parts = [svgOpen(width, height)];
  const extent = extentOf(spans);
  if (!extent || spans.every((span) => span.length < 2)) {
    parts.push(
      `<text x="4" y="${height / 2 + 4}" font-size="10" fill="#888">no sweep samples</text>`,
    );
  } else {
    spans.forEach((span, index) => {
      if (span.length < 2) return;
      const isPre = index === 0;
      const isPost = index === spans.length - 1 && spans.length > 1;
      const stroke = isPre ? "#2a7ae2" : isPost ? "#b5541c" : "#999";
      parts.push(polyline(span, extent, width, height, stroke, isPost));
    });
    parts.push(
      `<text x="4" y="11" font-size="9" fill="#666">${escapeXml(
        options.label ?? "sweep current_ua vs t_s (pre solid, post dashed)",
      )}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("");
}

/**
 * Background colour for a heatmap bucket: longer mean lifetime → deeper
 * green; no data → neutral grey.
 */
export function lifetimeColor(
  meanLifetimeS: number | null,
  scaleMaxS: number,
): string {
  if (meanLifetimeS === null || scaleMaxS <= 0) return "#e8e8e8";
  const fraction = Math.max(0, Math.min(1, meanLifetimeS / scaleMaxS));
  const lightness = 92 - fraction * 42;
  return `hsl(140, 45%, ${lightness.toFixed(0)}%)`;
}
