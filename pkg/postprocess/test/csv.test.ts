import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { NoDataError, SchemaError, numericColumn, readCsv } from "../src/csv.js";

const FIXTURES = join(__dirname, "..", "fixtures");

function tmpCsv(content: string): string {
  const dir = mkdtempSync(join(tmpdir(), "ppcsv-"));
  const p = join(dir, "t.csv");
  writeFileSync(p, content);
  return p;
}

describe("readCsv", () => {
  it("reads the shipped convergence fixture", () => {
    const t = readCsv(join(FIXTURES, "convergence_heat.csv"));
    expect(t.columns).toEqual(["dt", "error", "fitted_slope"]);
    expect(t.rows.length).toBeGreaterThanOrEqual(2);
  });

  it("raises a no-data error on an empty file", () => {
    expect(() => readCsv(tmpCsv(""))).toThrow(NoDataError);
  });

  it("raises a no-data error on a header-only file", () => {
    expect(() => readCsv(tmpCsv("a,b,c\n"))).toThrow(NoDataError);
  });
});

describe("numericColumn", () => {
  it("names the missing column", () => {
    const t = readCsv(tmpCsv("a,b\n1,2\n"));
    expect(() => numericColumn(t, "dt", "t.csv")).toThrow(/"dt"/);
    expect(() => numericColumn(t, "dt", "t.csv")).toThrow(SchemaError);
  });

  it("names the offending row for non-numeric cells", () => {
    const t = readCsv(tmpCsv("a\n1\nbananas\n"));
    expect(() => numericColumn(t, "a", "t.csv")).toThrow(/row 1/);
  });

  it("parses full-precision floats", () => {
    const t = readCsv(tmpCsv("v\n0.004647001283560548\n"));
    expect(numericColumn(t, "v")[0]).toBe(0.004647001283560548);
  });
});
