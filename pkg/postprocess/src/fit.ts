/** Small numeric helpers: least-squares fits and histogram binning. */

export interface LineFit {
  slope: number;
  intercept: number;
}

export function leastSquares(x: number[], y: number[]): LineFit {
  if (x.length !== y.length || x.length < 2) {
    throw new Error(`need at least two matched points, got ${x.length}/${y.length}`);
  }
  const n = x.length;
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx === 0) throw new Error("degenerate abscissae; cannot fit a slope");
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx };
}

/** Slope of log(y) against log(x); the convergence-order estimator. */
export function logLogSlope(x: number[], y: number[]): LineFit {
  for (const v of [...x, ...y]) {
    if (!(v > 0)) throw new Error(`log-log fit needs positive data, got ${v}`);
  }
  return leastSquares(x.map(Math.log), y.map(Math.log));
}

export interface Bin {
  start: number;
  end: number;
  count: number;
}

export function histogram(values: number[], nBins = 24): Bin[] {
  if (values.length === 0) return [];
  const min = Math.min(...values);
  const max = Math.max(...values);
  const width = (max - min || 1) / nBins;
  const bins: Bin[] = Array.from({ length: nBins }, (_, i) => ({
    start: min + i * width,
    end: min + (i + 1) * width,
    count: 0,
  }));
  for (const v of values) {
    const idx = Math.min(Math.floor((v - min) / width), nBins - 1);
    bins[idx].count++;
  }
  return bins;
}
