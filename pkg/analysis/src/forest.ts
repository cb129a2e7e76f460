import { mulberry32, randInt } from "./rng.js";

type TreeNode =
  | { kind: "leaf"; label: number }
  | { kind: "split"; feature: number; threshold: number; left: TreeNode; right: TreeNode };

export interface ForestModel {
  trees: TreeNode[];
}

export interface ForestOptions {
  trees?: number;
  seed?: number;
  maxFeatures?: number;
}

export const DEFAULT_TREES = 100;

function gini(counts: Map<number, number>, total: number): number {
  let g = 1;
  for (const c of counts.values()) {
    const p = c / total;
    g -= p * p;
  }
  return g;
}

function majority(labels: number[], idx: number[]): number {
  const counts = new Map<number, number>();
  for (const i of idx) {
    counts.set(labels[i], (counts.get(labels[i]) ?? 0) + 1);
  }
  let best = -1;
  let bestCount = -1;
  for (const [label, count] of [...counts.entries()].sort((a, b) => a[0] - b[0])) {
    if (count > bestCount) {
      bestCount = count;
      best = label;
    }
  }
  return best;
}

interface Split {
  feature: number;
  threshold: number;
  impurity: number;
}

// exhaustive CART search over midpoint thresholds of the sampled features;
// ties go to the lower feature index, then the lower threshold
function bestSplit(
  rows: number[][],
  labels: number[],
  idx: number[],
  features: number[],
): Split | null {
  let best: Split | null = null;
  for (const f of features) {
    const order = [...idx].sort((a, b) => rows[a][f] - rows[b][f]);
    const leftCounts = new Map<number, number>();
    const rightCounts = new Map<number, number>();
    for (const i of order) {
      rightCounts.set(labels[i], (rightCounts.get(labels[i]) ?? 0) + 1);
    }
    for (let cut = 1; cut < order.length; cut++) {
      const moved = labels[order[cut - 1]];
      leftCounts.set(moved, (leftCounts.get(moved) ?? 0) + 1);
      rightCounts.set(moved, rightCounts.get(moved)! - 1);
      const lo = rows[order[cut - 1]][f];
      const hi = rows[order[cut]][f];
      if (lo === hi) continue;
      const impurity =
        (cut / order.length) * gini(leftCounts, cut) +
        ((order.length - cut) / order.length) * gini(rightCounts, order.length - cut);
      const threshold = lo + (hi - lo) / 2;
      if (
        best === null ||
        impurity < best.impurity - 1e-12 ||
        (Math.abs(impurity - best.impurity) <= 1e-12 &&
          (f < best.feature || (f === best.feature && threshold < best.threshold)))
      ) {
        best = { feature: f, threshold, impurity };
      }
    }
  }
  return best;
}

function sampleFeatures(nFeatures: number, count: number, rand: () => number): number[] {
  const pool = Array.from({ length: nFeatures }, (_, i) => i);
  for (let i = 0; i < count; i++) {
    const j = i + randInt(rand, nFeatures - i);
    const tmp = pool[i];
    pool[i] = pool[j];
    pool[j] = tmp;
  }
  return pool.slice(0, count).sort((a, b) => a - b);
}

function buildTree(
  rows: number[][],
  labels: number[],
  idx: number[],
  maxFeatures: number,
  rand: () => number,
): TreeNode {
  const first = labels[idx[0]];
  if (idx.every((i) => labels[i] === first)) {
    return { kind: "leaf", label: first };
  }
  const candidates = sampleFeatures(rows[0].length, maxFeatures, rand);
  const split = bestSplit(rows, labels, idx, candidates);
  if (split === null) {
    return { kind: "leaf", label: majority(labels, idx) };
  }
  const leftIdx: number[] = [];
  const rightIdx: number[] = [];
  for (const i of idx) {
    if (rows[i][split.feature] <= split.threshold) leftIdx.push(i);
    else rightIdx.push(i);
  }
  if (leftIdx.length === 0 || rightIdx.length === 0) {
    return { kind: "leaf", label: majority(labels, idx) };
  }
  return {
    kind: "split",
    feature: split.feature,
    threshold: split.threshold,
    left: buildTree(rows, labels, leftIdx, maxFeatures, rand),
    right: buildTree(rows, labels, rightIdx, maxFeatures, rand),
  };
}

/**
 * Random forest of CART trees: bootstrap sample per tree, gini impurity,
 * sqrt(feature count) candidate features per node, grown until pure.
 */
export function trainForest(rows: number[][], labels: number[], opts: ForestOptions = {}): ForestModel {
  if (rows.length === 0 || rows.length !== labels.length) {
    throw new Error("training data and labels must be non-empty and aligned");
  }
  const nTrees = opts.trees ?? DEFAULT_TREES;
  if (!Number.isInteger(nTrees) || nTrees < 1) {
    throw new Error(`tree count must be a positive integer, got ${nTrees}`);
  }
  const nFeatures = rows[0].length;
  const maxFeatures = opts.maxFeatures ?? Math.max(1, Math.floor(Math.sqrt(nFeatures)));
  if (maxFeatures < 1 || maxFeatures > nFeatures) {
    throw new Error(`maxFeatures must be in [1, ${nFeatures}], got ${maxFeatures}`);
  }
  // offset the stream so the forest does not replay the split shuffle
  const rand = mulberry32(((opts.seed ?? 0) ^ 0x9e3779b9) >>> 0);
  const trees: TreeNode[] = [];
  for (let t = 0; t < nTrees; t++) {
    const idx: number[] = [];
    for (let i = 0; i < rows.length; i++) {
      idx.push(randInt(rand, rows.length));
    }
    trees.push(buildTree(rows, labels, idx, maxFeatures, rand));
  }
  return { trees };
}

function treePredict(node: TreeNode, row: number[]): number {
  while (node.kind === "split") {
    node = row[node.feature] <= node.threshold ? node.left : node.right;
  }
  return node.label;
}

/** majority vote; an exact tie counts as an alarm */
export function predictForest(model: ForestModel, row: number[]): number {
  let positive = 0;
  for (const tree of model.trees) {
    if (treePredict(tree, row) === 1) positive++;
  }
  return positive * 2 >= model.trees.length ? 1 : 0;
}
