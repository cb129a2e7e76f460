export interface KnnModel {
  k: number;
  rows: number[][];
  labels: number[];
  means: number[];
  stds: number[];
}

export const DEFAULT_K = 5;

/**
 * k-nearest-neighbors with features standardized to training z-scores.
 * Euclidean distance on raw flow features would be decided entirely by the
 * columns with the largest magnitudes (the per-second rates), so every
 * feature is centered and scaled first. A constant column gets scale 1.
 */
export function trainKnn(rows: number[][], labels: number[], k = DEFAULT_K): KnnModel {
  if (rows.length === 0 || rows.length !== labels.length) {
    throw new Error("training data and labels must be non-empty and aligned");
  }
  if (!Number.isInteger(k) || k < 1 || k > rows.length) {
    throw new Error(`k must be in [1, ${rows.length}], got ${k}`);
  }
  const nFeatures = rows[0].length;
  const means = new Array<number>(nFeatures).fill(0);
  const stds = new Array<number>(nFeatures).fill(0);
  for (let j = 0; j < nFeatures; j++) {
    for (const row of rows) means[j] += row[j];
    means[j] /= rows.length;
    let ss = 0;
    for (const row of rows) ss += (row[j] - means[j]) ** 2;
    stds[j] = Math.sqrt(ss / rows.length);
    if (stds[j] === 0) stds[j] = 1;
  }
  const scaled = rows.map((row) => row.map((v, j) => (v - means[j]) / stds[j]));
  return { k, rows: scaled, labels: [...labels], means, stds };
}

export function predictKnn(model: KnnModel, row: number[]): number {
  const q = row.map((v, j) => (v - model.means[j]) / model.stds[j]);
  const dists: { d: number; i: number }[] = [];
  for (let i = 0; i < model.rows.length; i++) {
    const r = model.rows[i];
    let d = 0;
    for (let j = 0; j < q.length; j++) {
      const diff = r[j] - q[j];
      d += diff * diff;
    }
    dists.push({ d, i });
  }
  // index as tiebreaker keeps equal-distance neighbors in a fixed order
  dists.sort((a, b) => a.d - b.d || a.i - b.i);

  const votes = new Map<number, number>();
  for (let n = 0; n < model.k; n++) {
    const label = model.labels[dists[n].i];
    votes.set(label, (votes.get(label) ?? 0) + 1);
  }
  let best = -1;
  let bestVotes = -1;
  for (const [label, count] of [...votes.entries()].sort((a, b) => a[0] - b[0])) {
    if (count > bestVotes) {
      bestVotes = count;
      best = label;
    }
  }
  return best;
}
