// Compact viridis-like gradient (fixed anchor stops, linear RGB interpolation).
const STOPS: [number, number, number][] = [
  [68, 1, 84],
  [71, 44, 122],
  [59, 81, 139],
  [44, 113, 142],
  [33, 144, 141],
  [39, 173, 129],
  [92, 200, 99],
  [170, 220, 50],
  [253, 231, 37],
];

export function colormap(t: number): string {
  const x = Math.min(1, Math.max(0, t)) * (STOPS.length - 1);
  const i = Math.min(STOPS.length - 2, Math.floor(x));
  const f = x - i;
  const mix = (a: number, b: number) => Math.round(a + (b - a) * f);
  const [r, g, b] = [0, 1, 2].map((k) => mix(STOPS[i][k], STOPS[i + 1][k]));
  return `#${[r, g, b].map((v) => v.toString(16).padStart(2, "0")).join("")}`;
}

// Spectral heatmap scales are anchored at the reference-ensemble values:
// 2d Poisson (2/3, 0) and Ginibre (0.738, 0.244); imbalance is a ratio in
// [0, 1].  Unknown columns fall back to the data range.
const ANCHORS: Record<string, [number, number]> = {
  r_mean: [2 / 3, 0.738],
  neg_cos_mean: [0.0, 0.244],
  imbalance_ss: [0.0, 1.0],
  imbalance_mean: [0.0, 1.0],
};

export function valueRange(column: string, values: number[]): [number, number] {
  const anchored = ANCHORS[column];
  if (anchored) return anchored;
  let lo = Math.min(...values);
  let hi = Math.max(...values);
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  return [lo, hi];
}

export const LINE_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
