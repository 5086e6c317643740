import { Table, numberColumn, requireColumns } from "./csv.js";
import { colormap, valueRange } from "./colors.js";
import { document, el, fmt, text } from "./svg.js";

const CELL = 56;
const MARGIN = { left: 70, right: 96, top: 44, bottom: 56 };

/** Heatmap of one value column over the (h, zeta) grid (categorical axes). */
export function renderHeatmap(table: Table, valueColumn: string): string {
  requireColumns(table, ["h", "zeta", valueColumn]);
  const hs = numberColumn(table, "h");
  const zs = numberColumn(table, "zeta");
  const vals = numberColumn(table, valueColumn);
  const xs = [...new Set(hs)].sort((a, b) => a - b);
  const ys = [...new Set(zs)].sort((a, b) => a - b);
  const [lo, hi] = valueRange(valueColumn, vals);
  const width = MARGIN.left + CELL * xs.length + MARGIN.right;
  const height = MARGIN.top + CELL * ys.length + MARGIN.bottom;

  const cells: string[] = [];
  for (let k = 0; k < vals.length; k++) {
    const i = xs.indexOf(hs[k]);
    const j = ys.indexOf(zs[k]);
    const t = hi > lo ? (vals[k] - lo) / (hi - lo) : 0.5;
    cells.push(
      el("rect", {
        class: "cell",
        x: MARGIN.left + i * CELL,
        y: MARGIN.top + (ys.length - 1 - j) * CELL,
        width: CELL,
        height: CELL,
        fill: colormap(t),
      }),
    );
  }

  const labels: string[] = [];
  xs.forEach((h, i) => {
    labels.push(
      text(MARGIN.left + (i + 0.5) * CELL, height - MARGIN.bottom + 18, fmt(h), {
        "text-anchor": "middle",
        "font-size": 12,
      }),
    );
  });
  ys.forEach((z, j) => {
    labels.push(
      text(MARGIN.left - 8, MARGIN.top + (ys.length - 1 - j + 0.5) * CELL + 4, fmt(z), {
        "text-anchor": "end",
        "font-size": 12,
      }),
    );
  });
  labels.push(
    text(MARGIN.left + (CELL * xs.length) / 2, height - 12, "disorder strength h", {
      "text-anchor": "middle",
      "font-size": 13,
    }),
    el(
      "g",
      { transform: `translate(16 ${fmt(MARGIN.top + (CELL * ys.length) / 2)}) rotate(-90)` },
      [text(0, 0, "jump fugacity ζ", { "text-anchor": "middle", "font-size": 13 })],
    ),
    text(MARGIN.left, 26, valueColumn, { "font-size": 14, "font-weight": "bold" }),
  );

  // colorbar with the anchored scale
  const bar: string[] = [];
  const barX = MARGIN.left + CELL * xs.length + 24;
  const barH = CELL * ys.length;
  const steps = 32;
  for (let s = 0; s < steps; s++) {
    bar.push(
      el("rect", {
        x: barX,
        y: MARGIN.top + barH - ((s + 1) * barH) / steps,
        width: 14,
        height: barH / steps + 0.5,
        fill: colormap((s + 0.5) / steps),
      }),
    );
  }
  bar.push(
    text(barX + 20, MARGIN.top + barH, fmt(lo), { "font-size": 11 }),
    text(barX + 20, MARGIN.top + 10, fmt(hi), { "font-size": 11 }),
  );

  return document(width, height, [...cells, ...labels, ...bar]);
}
