import { basename } from "node:path";
import { Table, numberColumn, requireColumns } from "./csv.js";
import { LINE_PALETTE } from "./colors.js";
import { document, el, fmt, text, ticks } from "./svg.js";

const WIDTH = 520;
const HEIGHT = 340;
const MARGIN = { left: 64, right: 16, top: 28, bottom: 48 };

export interface NamedTable {
  name: string;
  table: Table;
}

export function seriesLabel(path: string): string {
  return basename(path).replace(/\.csv$/, "");
}

/** Imbalance vs time with a +-stderr band per input file. */
export function renderTimeseries(inputs: NamedTable[]): string {
  if (inputs.length === 0) throw new RangeError("no input series");
  const parsed = inputs.map(({ name, table }) => {
    requireColumns(table, ["time", "imbalance_mean", "imbalance_stderr"]);
    return {
      name,
      t: numberColumn(table, "time"),
      mean: numberColumn(table, "imbalance_mean"),
      err: numberColumn(table, "imbalance_stderr"),
    };
  });
  const tLo = Math.min(...parsed.map((p) => Math.min(...p.t)));
  const tHi = Math.max(...parsed.map((p) => Math.max(...p.t)));
  let yLo = Math.min(...parsed.map((p) => Math.min(...p.mean.map((m, i) => m - p.err[i]))));
  let yHi = Math.max(...parsed.map((p) => Math.max(...p.mean.map((m, i) => m + p.err[i]))));
  if (!(yHi > yLo)) {
    yLo -= 0.05;
    yHi += 0.05;
  }
  const pad = 0.04 * (yHi - yLo);
  yLo -= pad;
  yHi += pad;

  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const X = (t: number) => MARGIN.left + (tHi > tLo ? ((t - tLo) / (tHi - tLo)) * plotW : plotW / 2);
  const Y = (y: number) => MARGIN.top + plotH - ((y - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    el("rect", {
      x: MARGIN.left,
      y: MARGIN.top,
      width: plotW,
      height: plotH,
      fill: "none",
      stroke: "#444444",
      "stroke-width": 1,
    }),
  );
  for (const tk of ticks(tLo, tHi)) {
    parts.push(
      el("line", {
        x1: X(tk), y1: MARGIN.top + plotH, x2: X(tk), y2: MARGIN.top + plotH + 5,
        stroke: "#444444", "stroke-width": 1,
      }),
      text(X(tk), MARGIN.top + plotH + 18, fmt(tk), { "text-anchor": "middle", "font-size": 11 }),
    );
  }
  for (const tk of ticks(yLo, yHi)) {
    parts.push(
      el("line", {
        x1: MARGIN.left - 5, y1: Y(tk), x2: MARGIN.left, y2: Y(tk),
        stroke: "#444444", "stroke-width": 1,
      }),
      text(MARGIN.left - 8, Y(tk) + 4, fmt(tk), { "text-anchor": "end", "font-size": 11 }),
    );
  }

  parsed.forEach((p, k) => {
    const color = LINE_PALETTE[k % LINE_PALETTE.length];
    const upper = p.t.map((t, i) => `${fmt(X(t))},${fmt(Y(p.mean[i] + p.err[i]))}`);
    const lower = p.t
      .map((t, i) => `${fmt(X(t))},${fmt(Y(p.mean[i] - p.err[i]))}`)
      .reverse();
    parts.push(
      el("polygon", {
        points: [...upper, ...lower].join(" "),
        fill: color,
        "fill-opacity": 0.18,
        stroke: "none",
      }),
      el("polyline", {
        class: "series",
        points: p.t.map((t, i) => `${fmt(X(t))},${fmt(Y(p.mean[i]))}`).join(" "),
        fill: "none",
        stroke: color,
        "stroke-width": 1.6,
      }),
      el("rect", {
        x: MARGIN.left + plotW - 170, y: MARGIN.top + 10 + 18 * k, width: 14, height: 4,
        fill: color,
      }),
      text(MARGIN.left + plotW - 150, MARGIN.top + 16 + 18 * k, p.name, { "font-size": 11 }),
    );
  });

  parts.push(
    text(MARGIN.left + plotW / 2, HEIGHT - 12, "time (1/J)", {
      "text-anchor": "middle",
      "font-size": 13,
    }),
    el("g", { transform: `translate(16 ${fmt(MARGIN.top + plotH / 2)}) rotate(-90)` }, [
      text(0, 0, "imbalance", { "text-anchor": "middle", "font-size": 13 }),
    ]),
  );
  return document(WIDTH, HEIGHT, parts);
}
