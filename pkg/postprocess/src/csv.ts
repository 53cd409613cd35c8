/**
 * CSV ingestion against the solver's documented column contracts.
 *
 * The upstream CLI writes plain comma-separated files with a header row
 * and full-precision floats; this module parses them and fails loudly
 * when a required column is missing or a file carries no data rows.
 */

import { readFileSync } from "node:fs";
import Papa from "papaparse";

export class SchemaError extends Error {}
export class NoDataError extends Error {}

export interface Table {
  columns: string[];
  rows: Record<string, string>[];
}

export function readCsv(path: string): Table {
  const text = readFileSync(path, "utf-8");
  const parsed = Papa.parse<Record<string, string>>(text.trim(), {
    header: true,
    skipEmptyLines: true,
    delimiter: ",",
  });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new SchemaError(`${path}: ${e.message} (row ${e.row})`);
  }
  const columns = parsed.meta.fields ?? [];
  if (columns.length === 0) {
    throw new NoDataError(`${path}: no data (missing header)`);
  }
  if (parsed.data.length === 0) {
    throw new NoDataError(`${path}: no data rows`);
  }
  return { columns, rows: parsed.data };
}

/** Extract one column as numbers, naming the column on any failure. */
export function numericColumn(table: Table, name: string, path = ""): number[] {
  if (!table.columns.includes(name)) {
    throw new SchemaError(
      `${path}: required column "${name}" not found (have: ${table.columns.join(", ")})`,
    );
  }
  return table.rows.map((row, i) => {
    const v = Number(row[name]);
    if (!Number.isFinite(v)) {
      throw new SchemaError(`${path}: column "${name}" row ${i} is not numeric: ${row[name]}`);
    }
    return v;
  });
}

/** All values of a (possibly non-numeric) column. */
export function column(table: Table, name: string, path = ""): string[] {
  if (!table.columns.includes(name)) {
    throw new SchemaError(
      `${path}: required column "${name}" not found (have: ${table.columns.join(", ")})`,
    );
  }
  return table.rows.map((row) => row[name]);
}
