#!/usr/bin/env node
/** Command-line figure generation from solver CSV outputs. */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { NoDataError, SchemaError } from "./csv.js";
import { PlotKind, PlotSpec, render } from "./plots.js";

const KINDS: PlotKind[] = ["convergence", "ensemble-hist", "tail-decay", "sector-polar"];

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .usage("$0 <kind> --input data.csv --output figure.svg [--sidecar fit.txt]")
    .command("$0 <kind>", "render one figure", (y) =>
      y.positional("kind", { choices: KINDS, demandOption: true, type: "string" }),
    )
    .option("input", { type: "array", demandOption: true, describe: "input CSV path(s)" })
    .option("output", { type: "string", demandOption: true, describe: "output SVG path" })
    .option("sidecar", { type: "string", describe: "fitted-parameter sidecar path" })
    .option("column", { type: "string", describe: "histogram column" })
    .option("bins", { type: "number", describe: "histogram bin count" })
    .strict()
    .exitProcess(false)
    .parseAsync();

  const spec: PlotSpec = {
    kind: args.kind as PlotKind,
    inputs: (args.input as Array<string | number>).map(String),
    output: args.output,
    sidecar: args.sidecar,
    column: args.column,
    bins: args.bins,
  };
  try {
    const res = render(spec);
    const extra = res.fit ? ` (slope ${res.fit.slope.toFixed(3)})` : "";
    console.log(`wrote ${res.output}${res.sidecar ? ` and ${res.sidecar}` : ""}${extra}`);
    return 0;
  } catch (err) {
    if (err instanceof NoDataError) {
      console.error(`no data: ${(err as Error).message}`);
      return 3;
    }
    if (err instanceof SchemaError) {
      console.error(`schema mismatch: ${(err as Error).message}`);
      return 2;
    }
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split("/").pop()!);
if (invokedDirectly) {
  main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
