import { describe, expect, it } from "vitest";
import { Dataset } from "../src/dataset.js";
import { mulberry32 } from "../src/rng.js";
import { stratifiedSplit } from "../src/split.js";

function makeDataset(positives: number, negatives: number): Dataset {
  const labels = [...Array(positives).fill(1), ...Array(negatives).fill(0)];
  return {
    features: ["f"],
    rows: labels.map((_, i) => [i]),
    labels,
  };
}

describe("stratifiedSplit", () => {
  it("splits 80/20 and partitions the rows exactly", () => {
    const ds = makeDataset(86, 310);
    const { train, test, trainIdx, testIdx } = stratifiedSplit(ds, 0.2, 42);
    expect(testIdx.length + trainIdx.length).toBe(396);
    expect(new Set([...testIdx, ...trainIdx]).size).toBe(396);
    expect(test.rows.length).toBe(testIdx.length);
    expect(train.rows.length).toBe(trainIdx.length);
    // per-class rounding: round(86*0.2)=17, round(310*0.2)=62
    expect(test.labels.filter((l) => l === 1).length).toBe(17);
    expect(test.labels.filter((l) => l === 0).length).toBe(62);
  });

  it("keeps the test class ratio within one sample of the dataset ratio", () => {
    const rand = mulberry32(99);
    for (let trial = 0; trial < 100; trial++) {
      const pos = 6 + Math.floor(rand() * 200);
      const neg = 6 + Math.floor(rand() * 200);
      const ds = makeDataset(pos, neg);
      const { test } = stratifiedSplit(ds, 0.2, trial);
      const testPos = test.labels.filter((l) => l === 1).length;
      const expected = test.labels.length * (pos / (pos + neg));
      expect(Math.abs(testPos - expected)).toBeLessThanOrEqual(1);
      expect(testPos).toBeGreaterThan(0);
      expect(testPos).toBeLessThan(test.labels.length);
    }
  });

  it("puts both classes in both halves", () => {
    const { train, test } = stratifiedSplit(makeDataset(10, 40), 0.2, 0);
    expect(new Set(train.labels)).toEqual(new Set([0, 1]));
    expect(new Set(test.labels)).toEqual(new Set([0, 1]));
  });

  it("is deterministic for a seed and varies across seeds", () => {
    const ds = makeDataset(30, 70);
    const a = stratifiedSplit(ds, 0.2, 5);
    const b = stratifiedSplit(ds, 0.2, 5);
    expect(b.testIdx).toEqual(a.testIdx);
    const others = [6, 7, 8, 9].map((s) => stratifiedSplit(ds, 0.2, s).testIdx);
    expect(others.some((idx) => JSON.stringify(idx) !== JSON.stringify(a.testIdx))).toBe(true);
  });

  it("rejects a class too small to appear in the test set", () => {
    // round(2 * 0.2) = 0 test samples for the positive class
    expect(() => stratifiedSplit(makeDataset(2, 100), 0.2, 0)).toThrow(/degenerate split/);
  });

  it("rejects single-class data and out-of-range fractions", () => {
    expect(() => stratifiedSplit(makeDataset(50, 0), 0.2, 0)).toThrow("single-class dataset");
    expect(() => stratifiedSplit(makeDataset(10, 10), 0, 0)).toThrow(/fraction/);
    expect(() => stratifiedSplit(makeDataset(10, 10), 1, 0)).toThrow(/fraction/);
  });
});
