import { Table, numberColumn, requireColumns } from "./csv.js";
import { colormap } from "./colors.js";
import { document, el, fmt, text } from "./svg.js";

const SIZE = 360;
const MARGIN = 34;

/** Density of complex spacing ratios on [-1, 1]^2, unit circle overlaid. */
export function renderDiskDensity(table: Table, bins = 32): string {
  if (bins < 8) throw new RangeError("need at least 8 bins per axis");
  requireColumns(table, ["re", "im"]);
  const re = numberColumn(table, "re");
  const im = numberColumn(table, "im");
  if (re.length === 0) throw new RangeError("no samples to bin");

  const counts = Array.from({ length: bins }, () => new Array<number>(bins).fill(0));
  const index = (v: number) => Math.max(0, Math.min(bins - 1, Math.floor(((v + 1) / 2) * bins)));
  for (let k = 0; k < re.length; k++) {
    counts[index(re[k])][index(im[k])] += 1;
  }
  const cellArea = (2 / bins) ** 2;
  const density = counts.map((row) => row.map((c) => c / (re.length * cellArea)));
  const peak = Math.max(...density.map((row) => Math.max(...row)));

  const plot = SIZE - 2 * MARGIN;
  const cell = plot / bins;
  const cells: string[] = [];
  for (let i = 0; i < bins; i++) {
    for (let j = 0; j < bins; j++) {
      if (counts[i][j] === 0) continue;
      cells.push(
        el("rect", {
          class: "cell",
          x: MARGIN + i * cell,
          y: MARGIN + (bins - 1 - j) * cell,
          width: cell + 0.1,
          height: cell + 0.1,
          fill: colormap(peak > 0 ? density[i][j] / peak : 0),
        }),
      );
    }
  }
  const center = MARGIN + plot / 2;
  const overlay = [
    el("rect", {
      x: MARGIN,
      y: MARGIN,
      width: plot,
      height: plot,
      fill: "none",
      stroke: "#777777",
      "stroke-width": 1,
    }),
    el("circle", {
      cx: center,
      cy: center,
      r: plot / 2,
      fill: "none",
      stroke: "#ffffff",
      "stroke-width": 1.2,
      "stroke-dasharray": "4 3",
    }),
    text(center, SIZE - 8, "Re ξ", { "text-anchor": "middle", "font-size": 13 }),
    el("g", { transform: `translate(12 ${fmt(center)}) rotate(-90)` }, [
      text(0, 0, "Im ξ", { "text-anchor": "middle", "font-size": 13 }),
    ]),
    text(MARGIN, 20, `spacing-ratio density (${re.length} samples, peak ${fmt(peak)})`, {
      "font-size": 12,
    }),
  ];
  return document(SIZE, SIZE, [...cells, ...overlay]);
}
