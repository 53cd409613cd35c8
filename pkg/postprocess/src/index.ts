export { NoDataError, SchemaError, column, numericColumn, readCsv } from "./csv.js";
export { histogram, leastSquares, logLogSlope } from "./fit.js";
export { render } from "./plots.js";
export type { PlotKind, PlotSpec, RenderResult } from "./plots.js";
