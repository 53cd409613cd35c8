/**
 * Minimal deterministic SVG scene building.
 *
 * Hand-rolled rather than DOM-based so output bytes depend only on the
 * input data: fixed styles, fixed precision, no timestamps.
 */

export interface Margin {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export const DEFAULT_MARGIN: Margin = { top: 28, right: 20, bottom: 44, left: 62 };

const fmt = (v: number) => {
  const s = v.toFixed(2);
  return s === "-0.00" ? "0.00" : s;
};

export function tickLabel(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(1);
  return String(Number(v.toPrecision(4)));
}

export interface Scale {
  (v: number): number;
  ticks: number[];
}

export function linearScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  const span = hi - lo || 1;
  const f = ((v: number) => outLo + ((v - lo) / span) * (outHi - outLo)) as Scale;
  const step = niceStep(span / 5);
  const ticks: number[] = [];
  for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-12 * Math.abs(span); t += step) {
    ticks.push(Number(t.toPrecision(12)));
  }
  f.ticks = ticks;
  return f;
}

export function logScale(lo: number, hi: number, outLo: number, outHi: number): Scale {
  if (!(lo > 0) || !(hi > 0)) throw new Error("log scale needs positive bounds");
  const la = Math.log10(lo);
  const lb = Math.log10(hi);
  const span = lb - la || 1;
  const f = ((v: number) => outLo + ((Math.log10(v) - la) / span) * (outHi - outLo)) as Scale;
  const ticks: number[] = [];
  for (let p = Math.ceil(la); p <= Math.floor(lb); p++) ticks.push(10 ** p);
  if (ticks.length === 0) ticks.push(lo, hi);
  f.ticks = ticks;
  return f;
}

function niceStep(raw: number): number {
  const mag = 10 ** Math.floor(Math.log10(Math.abs(raw) || 1));
  const r = raw / mag;
  if (r < 1.5) return mag;
  if (r < 3.5) return 2 * mag;
  if (r < 7.5) return 5 * mag;
  return 10 * mag;
}

export class Scene {
  readonly width: number;
  readonly height: number;
  private parts: string[] = [];

  constructor(width = 560, height = 400) {
    this.width = width;
    this.height = height;
  }

  add(part: string): void {
    this.parts.push(part);
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1, dash = ""): void {
    const d = dash ? ` stroke-dasharray="${dash}"` : "";
    this.add(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${width}"${d}/>`,
    );
  }

  circle(cx: number, cy: number, r: number, fill: string): void {
    this.add(`<circle cx="${fmt(cx)}" cy="${fmt(cy)}" r="${fmt(r)}" fill="${fill}"/>`);
  }

  rect(x: number, y: number, w: number, h: number, fill: string): void {
    this.add(`<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}"/>`);
  }

  text(x: number, y: number, content: string, size = 12, anchor = "start", rotate = 0): void {
    const tr = rotate ? ` transform="rotate(${rotate} ${fmt(x)} ${fmt(y)})"` : "";
    this.add(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${size}" font-family="sans-serif" text-anchor="${anchor}"${tr}>${escapeXml(content)}</text>`,
    );
  }

  polyline(pts: Array<[number, number]>, stroke: string, width = 1.5): void {
    const d = pts.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(" ");
    this.add(`<polyline points="${d}" fill="none" stroke="${stroke}" stroke-width="${width}"/>`);
  }

  /** Axes with ticks and labels on the plot frame. */
  axes(xs: Scale, ys: Scale, margin: Margin, xLabel: string, yLabel: string): void {
    const x0 = margin.left;
    const x1 = this.width - margin.right;
    const y0 = this.height - margin.bottom;
    const y1 = margin.top;
    this.line(x0, y0, x1, y0, "#222");
    this.line(x0, y0, x0, y1, "#222");
    for (const t of xs.ticks) {
      const px = xs(t);
      if (px < x0 - 0.5 || px > x1 + 0.5) continue;
      this.line(px, y0, px, y0 + 5, "#222");
      this.text(px, y0 + 18, tickLabel(t), 10, "middle");
    }
    for (const t of ys.ticks) {
      const py = ys(t);
      if (py > y0 + 0.5 || py < y1 - 0.5) continue;
      this.line(x0 - 5, py, x0, py, "#222");
      this.text(x0 - 8, py + 3, tickLabel(t), 10, "end");
    }
    this.text((x0 + x1) / 2, this.height - 8, xLabel, 12, "middle");
    this.text(16, (y0 + y1) / 2, yLabel, 12, "middle", -90);
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join("\n") +
      `\n</svg>\n`
    );
  }
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
