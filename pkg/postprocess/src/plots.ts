/**
 * Figure renderers for the solver's CSV contract.
 *
 * Four plot kinds: convergence (log-log with fitted order), ensemble
 * histogram, regularization tail decay, and sector-probe polar map.
 * Renderers transform CSV rows into SVG plus optional text sidecars;
 * they never recompute solver quantities beyond the fits they document.
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname } from "node:path";

import { NoDataError, column, numericColumn, readCsv } from "./csv.js";
import { histogram, leastSquares, logLogSlope } from "./fit.js";
import { DEFAULT_MARGIN, Scene, linearScale, logScale, tickLabel } from "./svg.js";

export type PlotKind = "convergence" | "ensemble-hist" | "tail-decay" | "sector-polar";

export interface PlotSpec {
  kind: PlotKind;
  inputs: string[];
  output: string;
  /** Sidecar path for fitted parameters (convergence only by default). */
  sidecar?: string;
  /** Histogram column; defaults to terminal_trace_norm. */
  column?: string;
  bins?: number;
}

export interface RenderResult {
  output: string;
  sidecar?: string;
  fit?: { slope: number; intercept: number };
}

export function render(spec: PlotSpec): RenderResult {
  if (spec.inputs.length === 0) throw new NoDataError("no input CSV given");
  switch (spec.kind) {
    case "convergence":
      return renderConvergence(spec);
    case "ensemble-hist":
      return renderEnsembleHist(spec);
    case "tail-decay":
      return renderTailDecay(spec);
    case "sector-polar":
      return renderSectorPolar(spec);
    default:
      throw new Error(`unknown plot kind ${(spec as PlotSpec).kind}`);
  }
}

function writeOut(path: string, content: string): void {
  mkdirSync(dirname(path) || ".", { recursive: true });
  writeFileSync(path, content);
}

function renderConvergence(spec: PlotSpec): RenderResult {
  const path = spec.inputs[0];
  const table = readCsv(path);
  const dts = numericColumn(table, "dt", path);
  const errors = numericColumn(table, "error", path);
  const fit = logLogSlope(dts, errors);

  const sc = new Scene();
  const m = DEFAULT_MARGIN;
  const xs = logScale(Math.min(...dts) / 1.3, Math.max(...dts) * 1.3, m.left, sc.width - m.right);
  const ys = logScale(
    Math.min(...errors) / 1.6,
    Math.max(...errors) * 1.6,
    sc.height - m.bottom,
    m.top,
  );
  sc.axes(xs, ys, m, "step size", "error");
  // fitted line across the data range
  const xsr = [Math.min(...dts), Math.max(...dts)];
  sc.polyline(
    xsr.map((x) => [xs(x), ys(Math.exp(fit.intercept + fit.slope * Math.log(x)))]),
    "#b55",
  );
  const pts = dts.map((d, i) => [xs(d), ys(errors[i])] as [number, number]);
  sc.polyline(pts, "#4472c4", 1);
  for (const [px, py] of pts) sc.circle(px, py, 3.5, "#4472c4");
  sc.text(sc.width - m.right, m.top - 10, `fitted slope ${fit.slope.toFixed(3)}`, 12, "end");
  writeOut(spec.output, sc.render());

  let sidecar: string | undefined;
  if (spec.sidecar) {
    sidecar = spec.sidecar;
    writeOut(sidecar, `slope = ${fit.slope.toPrecision(12)}\nintercept = ${fit.intercept.toPrecision(12)}\npoints = ${dts.length}\n`);
  }
  return { output: spec.output, sidecar, fit };
}

function renderEnsembleHist(spec: PlotSpec): RenderResult {
  const path = spec.inputs[0];
  const table = readCsv(path);
  const col = spec.column ?? "terminal_trace_norm";
  const values = numericColumn(table, col, path);
  const bins = histogram(values, spec.bins ?? 24);

  const sc = new Scene();
  const m = DEFAULT_MARGIN;
  const lo = bins[0].start;
  const hi = bins[bins.length - 1].end;
  const peak = Math.max(...bins.map((b) => b.count));
  const xs = linearScale(lo, hi, m.left, sc.width - m.right);
  const ys = linearScale(0, peak * 1.1, sc.height - m.bottom, m.top);
  sc.axes(xs, ys, m, col, "paths per bin");
  for (const b of bins) {
    const x = xs(b.start);
    const w = xs(b.end) - x;
    const y = ys(b.count);
    sc.rect(x + 0.5, y, Math.max(0, w - 1), ys(0) - y, "#4472c4");
  }
  sc.text(sc.width - m.right, m.top - 10, `paths: ${values.length}`, 12, "end");
  writeOut(spec.output, sc.render());
  return { output: spec.output };
}

function renderTailDecay(spec: PlotSpec): RenderResult {
  const path = spec.inputs[0];
  const table = readCsv(path);
  const times = numericColumn(table, "time", path);
  const tails = numericColumn(table, "tail_norm", path);
  const pos = tails.filter((t) => t > 0);
  if (pos.length === 0) throw new NoDataError(`${path}: all tail values vanish`);

  const sc = new Scene();
  const m = DEFAULT_MARGIN;
  const xs = linearScale(Math.min(...times), Math.max(...times), m.left, sc.width - m.right);
  const ys = logScale(Math.min(...pos) / 1.5, Math.max(...pos) * 1.5, sc.height - m.bottom, m.top);
  sc.axes(xs, ys, m, "time", "high-band tail");
  const pts = times
    .map((t, i) => [t, tails[i]] as [number, number])
    .filter(([, v]) => v > 0)
    .map(([t, v]) => [xs(t), ys(v)] as [number, number]);
  sc.polyline(pts, "#4472c4");
  for (const [px, py] of pts) sc.circle(px, py, 2.5, "#4472c4");
  writeOut(spec.output, sc.render());
  return { output: spec.output };
}

function renderSectorPolar(spec: PlotSpec): RenderResult {
  const path = spec.inputs[0];
  const table = readCsv(path);
  const thetas = numericColumn(table, "theta", path);
  const radii = numericColumn(table, "radius", path);
  const estimates = numericColumn(table, "estimate", path);
  const converged = column(table, "converged", path);

  const sc = new Scene(560, 460);
  const cx = sc.width / 2;
  const cy = sc.height / 2 + 10;
  const rMax = Math.min(sc.width, sc.height) / 2 - 50;
  const lr = radii.map((r) => Math.log10(r));
  const lo = Math.min(...lr);
  const hi = Math.max(...lr);
  const span = hi - lo || 1;
  const rho = (r: number) => 14 + ((Math.log10(r) - lo) / span) * (rMax - 14);
  const eMax = Math.max(...estimates.filter(Number.isFinite));

  // frame: radial circles at decade marks plus the probed rays
  for (let p = Math.ceil(lo); p <= Math.floor(hi); p++) {
    const rr = rho(10 ** p);
    sc.add(
      `<circle cx="${cx}" cy="${cy}" r="${rr.toFixed(2)}" fill="none" stroke="#ccc" stroke-width="0.7"/>`,
    );
    sc.text(cx + rr + 2, cy - 3, tickLabel(10 ** p), 9);
  }
  const uniqueThetas = [...new Set(thetas)].sort((a, b) => a - b);
  for (const th of uniqueThetas) {
    sc.line(cx, cy, cx + rMax * Math.cos(th), cy - rMax * Math.sin(th), "#ddd", 0.7);
    sc.text(
      cx + (rMax + 14) * Math.cos(th),
      cy - (rMax + 14) * Math.sin(th),
      th.toFixed(2),
      9,
      "middle",
    );
  }
  for (let i = 0; i < thetas.length; i++) {
    const px = cx + rho(radii[i]) * Math.cos(thetas[i]);
    const py = cy - rho(radii[i]) * Math.sin(thetas[i]);
    if (converged[i] !== "True" || !Number.isFinite(estimates[i])) {
      sc.text(px, py + 3, "x", 10, "middle");
      continue;
    }
    const w = estimates[i] / eMax;
    sc.circle(px, py, 2 + 5 * w, shade(w));
  }
  sc.text(cx, 18, `resolvent bound estimates; max ${eMax.toPrecision(4)}`, 12, "middle");
  writeOut(spec.output, sc.render());
  return { output: spec.output };
}

function shade(w: number): string {
  // light blue to dark red as the estimate approaches the maximum
  const r = Math.round(60 + 170 * w);
  const g = Math.round(110 - 60 * w);
  const b = Math.round(200 - 150 * w);
  return `rgb(${r},${g},${b})`;
}

export { leastSquares };
