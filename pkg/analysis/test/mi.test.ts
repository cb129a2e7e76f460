import { describe, expect, it } from "vitest";
import { Dataset } from "../src/dataset.js";
import { binColumn, mutualInformationScores, selectTopK } from "../src/mi.js";
import { mulberry32 } from "../src/rng.js";

function entropyNats(labels: number[]): number {
  const p = labels.reduce((a, b) => a + b, 0) / labels.length;
  if (p === 0 || p === 1) return 0;
  return -(p * Math.log(p) + (1 - p) * Math.log(1 - p));
}

describe("binColumn", () => {
  it("equal-width spreads a uniform ramp over all bins, boundary values go up", () => {
    const values = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];
    // edges at 0.9, 1.8, ... so integer k lands in bin k
    expect(binColumn(values, 10, "equal-width")).toEqual(values);
  });

  it("equal-width maps a constant column to bin 0", () => {
    expect(binColumn([5, 5, 5], 10, "equal-width")).toEqual([0, 0, 0]);
  });

  it("equal-frequency keeps equal values in the same bin", () => {
    const bs = binColumn([1, 1, 1, 1, 2, 2, 2, 2], 2, "equal-frequency");
    expect(bs).toEqual([0, 0, 0, 0, 1, 1, 1, 1]);
  });

  it("rejects a bin count below 2", () => {
    expect(() => binColumn([1, 2], 1, "equal-width")).toThrow(/bins/);
  });
});

describe("mutualInformationScores", () => {
  it("gives a feature identical to the label the label entropy, the maximum", () => {
    const labels = [0, 0, 0, 1, 1, 0, 1, 0, 0, 1];
    const ds: Dataset = {
      features: ["copy", "noise"],
      rows: labels.map((l, i) => [l, Math.sin(i * 12.9898) * 43758.5453]),
      labels,
    };
    const scores = mutualInformationScores(ds);
    expect(scores.copy).toBeCloseTo(entropyNats(labels), 12);
    expect(scores.copy).toBeGreaterThanOrEqual(scores.noise);
  });

  it("gives a constant feature exactly zero", () => {
    const ds: Dataset = {
      features: ["flat"],
      rows: [[7], [7], [7], [7]],
      labels: [0, 1, 0, 1],
    };
    expect(mutualInformationScores(ds).flat).toBe(0);
  });

  it("refuses a single-class dataset", () => {
    const ds: Dataset = { features: ["f"], rows: [[1], [2]], labels: [1, 1] };
    expect(() => mutualInformationScores(ds)).toThrow("single-class dataset");
  });

  it("scores are never negative", () => {
    const rand = mulberry32(7);
    for (let trial = 0; trial < 20; trial++) {
      const n = 10 + Math.floor(rand() * 50);
      const labels = Array.from({ length: n }, () => (rand() < 0.5 ? 0 : 1));
      labels[0] = 0;
      labels[1] = 1;
      const ds: Dataset = {
        features: ["a", "b"],
        rows: Array.from({ length: n }, () => [rand() * 100, Math.floor(rand() * 3)]),
        labels,
      };
      for (const s of Object.values(mutualInformationScores(ds))) {
        expect(s).toBeGreaterThanOrEqual(0);
      }
    }
  });

  it("separable two-cluster data recovers the full label entropy under equal width", () => {
    // values 0 and 9 land in bins 0 and 9, perfectly aligned with the label
    const labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
    const ds: Dataset = {
      features: ["f"],
      rows: labels.map((l) => [l * 9]),
      labels,
    };
    expect(mutualInformationScores(ds).f).toBeCloseTo(Math.log(2), 12);
  });

  it("is invariant under strictly increasing rescaling with equal-frequency bins", () => {
    // order-preserving maps only: a decreasing map mirrors the rank
    // partition, and the floor() block boundaries are not symmetric
    const rand = mulberry32(2024);
    const transforms: ((x: number) => number)[] = [
      (x) => 3 * x + 11,
      (x) => x * x * x,
      (x) => Math.exp(x / 50),
      (x) => x / (1 + Math.abs(x)),
    ];
    for (let trial = 0; trial < 40; trial++) {
      const n = 20 + Math.floor(rand() * 120);
      const labels = Array.from({ length: n }, () => (rand() < 0.4 ? 1 : 0));
      labels[0] = 0;
      labels[1] = 1;
      // mix smooth values with repeats so ties are exercised too
      const values = Array.from({ length: n }, () =>
        rand() < 0.3 ? Math.floor(rand() * 5) : rand() * 40 - 20,
      );
      const base: Dataset = { features: ["f"], rows: values.map((v) => [v]), labels };
      const reference = mutualInformationScores(base, { binning: "equal-frequency" }).f;
      for (const t of transforms) {
        const moved: Dataset = { features: ["f"], rows: values.map((v) => [t(v)]), labels };
        const score = mutualInformationScores(moved, { binning: "equal-frequency" }).f;
        expect(score).toBeCloseTo(reference, 9);
      }
    }
  });
});

describe("selectTopK", () => {
  it("takes the single best feature", () => {
    expect(selectTopK({ a: 0.9, b: 0.1 }, 1)).toEqual(["a"]);
  });

  it("breaks score ties by feature name", () => {
    expect(selectTopK({ b: 0.5, c: 0.5, a: 0.5, d: 0.4 }, 2)).toEqual(["a", "b"]);
  });

  it("returns every feature when k equals the feature count", () => {
    expect(selectTopK({ x: 0.1, y: 0.3 }, 2)).toEqual(["y", "x"]);
  });

  it("rejects k beyond the available features and non-positive k", () => {
    expect(() => selectTopK({ a: 1 }, 2)).toThrow(/exceeds/);
    expect(() => selectTopK({ a: 1 }, 0)).toThrow(/positive integer/);
  });
});
