import { mkdtempSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseCsv, readCsv, SchemaError } from "../src/csv.js";
import { renderHeatmap } from "../src/heatmap.js";
import { renderDiskDensity } from "../src/disk.js";
import { renderTimeseries } from "../src/timeseries.js";
import { main } from "../src/cli.js";

const FIX = new URL("../fixtures/", import.meta.url).pathname;

const countMatches = (s: string, re: RegExp) => (s.match(re) ?? []).length;

describe("heatmap", () => {
  it("renders one cell per (h, zeta) grid point", () => {
    const svg = renderHeatmap(readCsv(FIX + "spectral_scan.csv"), "r_mean");
    expect(svg.startsWith("<svg ")).toBe(true);
    expect(countMatches(svg, /class="cell"/g)).toBe(9); // 3 h x 3 zeta
    expect(svg).toContain("r_mean");
  });

  it("renders a single-point table as a single cell", () => {
    const t = parseCsv("h,zeta,r_mean\n5,1,0.7\n", "one.csv");
    const svg = renderHeatmap(t, "r_mean");
    expect(countMatches(svg, /class="cell"/g)).toBe(1);
  });

  it("works for dynamics scans with imbalance anchoring", () => {
    const svg = renderHeatmap(readCsv(FIX + "dynamics_scan.csv"), "imbalance_ss");
    expect(countMatches(svg, /class="cell"/g)).toBe(4); // 2 h x 2 zeta
  });

  it("rejects tables without the grid columns", () => {
    const t = parseCsv("time,imbalance_mean\n0,1\n", "bad.csv");
    expect(() => renderHeatmap(t, "r_mean")).toThrowError(SchemaError);
  });
});

describe("disk density", () => {
  it("renders reference samples inside the unit square", () => {
    const svg = renderDiskDensity(readCsv(FIX + "reference_poisson2d_samples.csv"), 16);
    expect(svg).toContain("circle");
    expect(countMatches(svg, /class="cell"/g)).toBeGreaterThan(10);
  });

  it("puts a point mass into one cell", () => {
    const t = parseCsv("re,im\n1,0\n1,0\n1,0\n", "point.csv");
    const svg = renderDiskDensity(t, 8);
    expect(countMatches(svg, /class="cell"/g)).toBe(1);
  });

  it("enforces the bin floor", () => {
    const t = parseCsv("re,im\n0,0\n", "p.csv");
    expect(() => renderDiskDensity(t, 4)).toThrowError(RangeError);
  });
});

describe("timeseries", () => {
  it("renders a flat line for constant imbalance", () => {
    const rows = ["time,imbalance_mean,imbalance_stderr,n_samples"];
    for (let i = 0; i <= 10; i++) rows.push(`${i},1,0,3`);
    const t = parseCsv(rows.join("\n") + "\n", "flat.csv");
    const svg = renderTimeseries([{ name: "flat", table: t }]);
    const pts = /class="series" points="([^"]+)"/.exec(svg);
    expect(pts).not.toBeNull();
    const ys = new Set(pts![1].split(" ").map((p) => p.split(",")[1]));
    expect(ys.size).toBe(1);
  });

  it("renders fixture series with error bands and a legend", () => {
    const svg = renderTimeseries([
      { name: "transient_h2_zeta1", table: readCsv(FIX + "transient_h2_zeta1.csv") },
      { name: "tebd_h8_zeta0.5", table: readCsv(FIX + "tebd_h8_zeta0.5.csv") },
    ]);
    expect(countMatches(svg, /class="series"/g)).toBe(2);
    expect(countMatches(svg, /<polygon /g)).toBe(2);
    expect(svg).toContain("transient_h2_zeta1");
  });
});

describe("cli and byte stability (A13)", () => {
  it("heatmap and timeseries figures regenerate byte-identically", () => {
    const dir = mkdtempSync(join(tmpdir(), "plots-"));
    for (const [args, name] of [
      [["heatmap", "--in", FIX + "spectral_scan.csv", "--value", "r_mean"], "heat.svg"],
      [["heatmap", "--in", FIX + "dynamics_scan.csv", "--value", "imbalance_ss"], "dyn.svg"],
      [["timeseries", "--in", FIX + "transient_h2_zeta1.csv"], "ts.svg"],
      [["disk_density", "--in", FIX + "reference_ginibre_samples.csv"], "disk.svg"],
    ] as [string[], string][]) {
      const out1 = join(dir, "a_" + name);
      const out2 = join(dir, "b_" + name);
      expect(main([...args, "--out", out1])).toBe(0);
      expect(main([...args, "--out", out2])).toBe(0);
      expect(readFileSync(out1)).toEqual(readFileSync(out2));
      expect(readFileSync(out1, "utf8").startsWith("<svg ")).toBe(true);
    }
  });

  it("returns 2 on usage and schema errors", () => {
    expect(main(["heatmap"])).toBe(2);
    expect(main(["bogus", "--in", FIX + "spectral_scan.csv", "--out", "/tmp/x.svg"])).toBe(2);
    expect(
      main(["heatmap", "--in", FIX + "transient_h2_zeta1.csv", "--out", "/tmp/x.svg"]),
    ).toBe(2);
  });
});
