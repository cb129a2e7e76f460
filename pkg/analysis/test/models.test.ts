import { describe, expect, it } from "vitest";
import { Dataset } from "../src/dataset.js";
import { predictForest, trainForest } from "../src/forest.js";
import { predictKnn, trainKnn } from "../src/knn.js";
import { predictNaiveBayes, trainNaiveBayes } from "../src/nb.js";
import { ALL_MODELS, trainEval } from "../src/pipeline.js";
import { mulberry32 } from "../src/rng.js";

/** two well-separated gaussian blobs, deterministic */
function separableToy(n = 60): Dataset {
  const rand = mulberry32(1234);
  const rows: number[][] = [];
  const labels: number[] = [];
  for (let i = 0; i < n; i++) {
    const label = i % 2;
    const center = label === 1 ? 10 : 0;
    rows.push([center + rand(), center + rand()]);
    labels.push(label);
  }
  return { features: ["x", "y"], rows, labels };
}

describe("trainEval", () => {
  it("scores perfectly separable data as all 100 for every model", () => {
    const ds = separableToy();
    for (const model of ALL_MODELS) {
      const m = trainEval(ds, model, 7);
      expect(m.sensitivity).toBe(100);
      expect(m.specificity).toBe(100);
      expect(m.accuracy).toBe(100);
    }
  });

  it("is deterministic for a fixed seed", () => {
    const ds = separableToy(40);
    for (const model of ALL_MODELS) {
      expect(trainEval(ds, model, 3)).toEqual(trainEval(ds, model, 3));
    }
  });

  it("rejects an unknown model name", () => {
    expect(() => trainEval(separableToy(), "SVM" as never, 0)).toThrow(/unknown model/);
  });
});

describe("naive bayes", () => {
  it("learns a one-feature threshold", () => {
    const rows = [[1], [1.2], [0.8], [5], [5.2], [4.8]];
    const labels = [0, 0, 0, 1, 1, 1];
    const model = trainNaiveBayes(rows, labels);
    expect(predictNaiveBayes(model, [1.1])).toBe(0);
    expect(predictNaiveBayes(model, [4.9])).toBe(1);
  });

  it("separates constant-per-class features despite the variance floor", () => {
    const rows = [[1], [1], [1], [2], [2], [2]];
    const labels = [0, 0, 0, 1, 1, 1];
    const model = trainNaiveBayes(rows, labels);
    expect(predictNaiveBayes(model, [1])).toBe(0);
    expect(predictNaiveBayes(model, [2])).toBe(1);
  });

  it("keeps a small-scale signal even next to a huge-scale noise column", () => {
    // a shared smoothing constant would flatten the first column's densities
    const rand = mulberry32(5);
    const rows: number[][] = [];
    const labels: number[] = [];
    for (let i = 0; i < 40; i++) {
      const label = i % 2;
      rows.push([label === 1 ? 2 : 1, rand() * 1e9]);
      labels.push(label);
    }
    const model = trainNaiveBayes(rows, labels);
    let correct = 0;
    for (let i = 0; i < 40; i++) {
      if (predictNaiveBayes(model, rows[i]) === labels[i]) correct++;
    }
    expect(correct).toBe(40);
  });

  it("rejects empty or misaligned training input", () => {
    expect(() => trainNaiveBayes([], [])).toThrow(/non-empty/);
    expect(() => trainNaiveBayes([[1]], [0, 1])).toThrow(/aligned/);
  });
});

describe("knn", () => {
  it("votes among the k nearest points", () => {
    const rows = [[0], [0.1], [0.2], [10], [10.1], [10.2]];
    const labels = [0, 0, 0, 1, 1, 1];
    const model = trainKnn(rows, labels, 3);
    expect(predictKnn(model, [0.05])).toBe(0);
    expect(predictKnn(model, [9.9])).toBe(1);
  });

  it("standardizes, so a large-scale noise column cannot drown the signal", () => {
    const rand = mulberry32(11);
    const rows: number[][] = [];
    const labels: number[] = [];
    for (let i = 0; i < 30; i++) {
      const label = i % 2;
      rows.push([label, 500 + rand()]);
      labels.push(label);
    }
    const model = trainKnn(rows, labels, 5);
    expect(predictKnn(model, [1, 500.5])).toBe(1);
    expect(predictKnn(model, [0, 500.5])).toBe(0);
  });

  it("bounds k by the training size", () => {
    expect(() => trainKnn([[1], [2]], [0, 1], 3)).toThrow(/k must be/);
    expect(() => trainKnn([[1], [2]], [0, 1], 0)).toThrow(/k must be/);
  });
});

describe("random forest", () => {
  it("fits and recalls a separable set", () => {
    const ds = separableToy(50);
    const model = trainForest(ds.rows, ds.labels, { trees: 25, seed: 9 });
    let correct = 0;
    for (let i = 0; i < ds.rows.length; i++) {
      if (predictForest(model, ds.rows[i]) === ds.labels[i]) correct++;
    }
    expect(correct).toBe(50);
  });

  it("is reproducible for a seed", () => {
    const ds = separableToy(40);
    const probe = Array.from({ length: 10 }, (_, i) => [i, i]);
    const a = trainForest(ds.rows, ds.labels, { trees: 15, seed: 4 });
    const b = trainForest(ds.rows, ds.labels, { trees: 15, seed: 4 });
    expect(probe.map((p) => predictForest(b, p))).toEqual(probe.map((p) => predictForest(a, p)));
  });

  it("handles a feature subset of one", () => {
    const ds = separableToy(30);
    const model = trainForest(ds.rows, ds.labels, { trees: 10, seed: 2, maxFeatures: 1 });
    expect(predictForest(model, [0.5, 0.5])).toBe(0);
    expect(predictForest(model, [10.5, 10.5])).toBe(1);
  });

  it("validates tree count and feature cap", () => {
    expect(() => trainForest([[1], [2]], [0, 1], { trees: 0 })).toThrow(/tree count/);
    expect(() => trainForest([[1], [2]], [0, 1], { maxFeatures: 2 })).toThrow(/maxFeatures/);
  });
});
