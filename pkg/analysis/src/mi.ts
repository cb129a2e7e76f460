import { Dataset, assertValidDataset } from "./dataset.js";

export type Binning = "equal-width" | "equal-frequency";

export interface MiOptions {
  bins?: number;
  binning?: Binning;
}

export const DEFAULT_BINS = 10;

/**
 * Assigns each value to one of `bins` buckets.
 *
 * equal-width slices [min, max] into bins of identical span; a value sitting
 * exactly on an edge goes to the upper bucket. equal-frequency takes the
 * sorted sample values at ranks floor(i*n/bins) as edges, so the assignment
 * depends only on the ordering of values. That is what makes mutual
 * information under equal-frequency binning invariant to strictly monotone
 * rescaling of a feature, and equal values always share a bucket.
 */
export function binColumn(values: number[], bins: number, binning: Binning): number[] {
  if (!Number.isInteger(bins) || bins < 2) {
    throw new Error(`bins must be an integer >= 2, got ${bins}`);
  }
  let edges: number[];
  if (binning === "equal-width") {
    let lo = values[0];
    let hi = values[0];
    for (const v of values) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
    if (hi === lo) {
      return values.map(() => 0);
    }
    edges = [];
    for (let i = 1; i < bins; i++) {
      edges.push(lo + ((hi - lo) * i) / bins);
    }
  } else if (binning === "equal-frequency") {
    const sorted = [...values].sort((a, b) => a - b);
    edges = [];
    for (let i = 1; i < bins; i++) {
      edges.push(sorted[Math.floor((i * sorted.length) / bins)]);
    }
  } else {
    throw new Error(`unknown binning ${JSON.stringify(binning)}`);
  }
  return values.map((x) => {
    let b = 0;
    for (const e of edges) {
      if (e <= x) b++;
    }
    return b;
  });
}

function miFromBins(bs: number[], labels: number[]): number {
  const n = bs.length;
  const joint = new Map<string, number>();
  const px = new Map<number, number>();
  const py = new Map<number, number>();
  for (let i = 0; i < n; i++) {
    const key = `${bs[i]},${labels[i]}`;
    joint.set(key, (joint.get(key) ?? 0) + 1);
    px.set(bs[i], (px.get(bs[i]) ?? 0) + 1);
    py.set(labels[i], (py.get(labels[i]) ?? 0) + 1);
  }
  let mi = 0;
  for (const [key, c] of joint) {
    const comma = key.indexOf(",");
    const b = Number(key.slice(0, comma));
    const y = Number(key.slice(comma + 1));
    const pxy = c / n;
    mi += pxy * Math.log(pxy / ((px.get(b)! / n) * (py.get(y)! / n)));
  }
  // exact independence can land a hair below zero in floating point
  return mi < 0 ? 0 : mi;
}

/**
 * Mutual information, in nats, between each feature and the class label.
 * Features are discretized first (10 equal-width bins unless told otherwise);
 * the label is used as is. A feature carrying no information about the label
 * scores 0, a feature that determines the label scores the label's entropy.
 */
export function mutualInformationScores(ds: Dataset, opts: MiOptions = {}): Record<string, number> {
  assertValidDataset(ds);
  const bins = opts.bins ?? DEFAULT_BINS;
  const binning = opts.binning ?? "equal-width";
  const scores: Record<string, number> = {};
  for (let j = 0; j < ds.features.length; j++) {
    const values = ds.rows.map((row) => row[j]);
    scores[ds.features[j]] = miFromBins(binColumn(values, bins, binning), ds.labels);
  }
  return scores;
}

/**
 * The k highest-scoring features, best first. Equal scores are ordered by
 * feature name so the result never depends on object key order.
 */
export function selectTopK(scores: Record<string, number>, k = 10): string[] {
  const names = Object.keys(scores);
  if (!Number.isInteger(k) || k < 1) {
    throw new Error(`k must be a positive integer, got ${k}`);
  }
  if (k > names.length) {
    throw new Error(`k=${k} exceeds the ${names.length} available features`);
  }
  names.sort((a, b) => {
    if (scores[a] !== scores[b]) return scores[b] - scores[a];
    return a < b ? -1 : a > b ? 1 : 0;
  });
  return names.slice(0, k);
}
