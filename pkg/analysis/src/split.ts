import { Dataset, assertValidDataset } from "./dataset.js";
import { mulberry32, shuffle } from "./rng.js";

export interface SplitResult {
  train: Dataset;
  test: Dataset;
  trainIdx: number[];
  testIdx: number[];
}

/**
 * Stratified train/test split: each class is shuffled and cut separately so
 * the test set's class ratio stays within one sample of the full dataset's.
 * On ~400-row datasets a plain random split can produce a single-class test
 * set, which is unusable for the metrics.
 */
export function stratifiedSplit(ds: Dataset, testFraction = 0.2, seed = 0): SplitResult {
  assertValidDataset(ds);
  if (!(testFraction > 0 && testFraction < 1)) {
    throw new Error(`test fraction must be in (0, 1), got ${testFraction}`);
  }

  const byClass = new Map<number, number[]>();
  for (let i = 0; i < ds.labels.length; i++) {
    const list = byClass.get(ds.labels[i]);
    if (list) list.push(i);
    else byClass.set(ds.labels[i], [i]);
  }

  const rand = mulberry32(seed);
  const testIdx: number[] = [];
  const trainIdx: number[] = [];
  // iterate classes in a fixed order so the seed alone determines the split
  for (const label of [...byClass.keys()].sort((a, b) => a - b)) {
    const indices = shuffle([...byClass.get(label)!], rand);
    const nTest = Math.round(indices.length * testFraction);
    if (nTest === 0 || nTest === indices.length) {
      throw new Error(
        `degenerate split: class ${label} has ${indices.length} samples, test share would be ${nTest}`,
      );
    }
    testIdx.push(...indices.slice(0, nTest));
    trainIdx.push(...indices.slice(nTest));
  }
  testIdx.sort((a, b) => a - b);
  trainIdx.sort((a, b) => a - b);

  const take = (idx: number[]): Dataset => ({
    features: ds.features,
    rows: idx.map((i) => ds.rows[i]),
    labels: idx.map((i) => ds.labels[i]),
  });
  return { train: take(trainIdx), test: take(testIdx), trainIdx, testIdx };
}
