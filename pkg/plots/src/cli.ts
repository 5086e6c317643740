#!/usr/bin/env node
import { writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { SchemaError, readCsv } from "./csv.js";
import { renderHeatmap } from "./heatmap.js";
import { renderDiskDensity } from "./disk.js";
import { renderTimeseries, seriesLabel } from "./timeseries.js";

const USAGE = `usage: plots <heatmap|disk_density|timeseries> --in FILE [FILE ...] --out PATH
  heatmap options:      --value COLUMN   (default r_mean)
  disk_density options: --bins N         (default 32)`;

export function render(kind: string, inputs: string[], opts: { value?: string; bins?: number }): string {
  switch (kind) {
    case "heatmap": {
      if (inputs.length !== 1) throw new RangeError("heatmap takes exactly one input table");
      return renderHeatmap(readCsv(inputs[0]), opts.value ?? "r_mean");
    }
    case "disk_density": {
      if (inputs.length !== 1) throw new RangeError("disk_density takes exactly one input table");
      return renderDiskDensity(readCsv(inputs[0]), opts.bins ?? 32);
    }
    case "timeseries":
      return renderTimeseries(
        inputs.map((p) => ({ name: seriesLabel(p), table: readCsv(p) })),
      );
    default:
      throw new RangeError(`unknown figure kind ${kind}`);
  }
}

export function main(argv: string[]): number {
  let parsedArgs;
  try {
    parsedArgs = parseArgs({
      args: argv,
      allowPositionals: true,
      options: {
        in: { type: "string", multiple: true },
        out: { type: "string" },
        value: { type: "string" },
        bins: { type: "string" },
      },
    });
  } catch (err) {
    console.error(String(err));
    console.error(USAGE);
    return 2;
  }
  const kind = parsedArgs.positionals[0];
  const inputs = parsedArgs.values.in ?? [];
  const out = parsedArgs.values.out;
  if (!kind || inputs.length === 0 || !out) {
    console.error(USAGE);
    return 2;
  }
  try {
    const svg = render(kind, inputs, {
      value: parsedArgs.values.value,
      bins: parsedArgs.values.bins ? Number(parsedArgs.values.bins) : undefined,
    });
    writeFileSync(out, svg);
  } catch (err) {
    if (err instanceof SchemaError || err instanceof RangeError) {
      console.error(String(err));
      return 2;
    }
    throw err;
  }
  return 0;
}

if (process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "")) {
  process.exit(main(process.argv.slice(2)));
}
