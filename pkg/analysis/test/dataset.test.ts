import { describe, expect, it } from "vitest";
import { assertValidDataset, parseFlowCsv, selectFeatures, column } from "../src/dataset.js";

const HEADER = "src_ip,src_port,dst_ip,dst_port,l4,duration_s,pkt_len_mean,dst_port,label";

function csv(...rows: string[]): string {
  return [HEADER, ...rows].join("\n");
}

describe("parseFlowCsv", () => {
  it("drops the five identity columns and keeps the rest as features", () => {
    const ds = parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,1883,tcp,1.5,79,1883,normal"));
    expect(ds.features).toEqual(["duration_s", "pkt_len_mean", "dst_port"]);
    expect(ds.rows).toEqual([[1.5, 79, 1883]]);
    expect(ds.labels).toEqual([0]);
  });

  it("reads the feature dst_port by position, not by the endpoint column", () => {
    // endpoint column says 9999, the feature copy says 1883
    const ds = parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,9999,tcp,1.5,79,1883,attack"));
    expect(column(ds, "dst_port")).toEqual([1883]);
    expect(ds.labels).toEqual([1]);
  });

  it("parses scientific notation the way the generator writes it", () => {
    const ds = parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,1883,tcp,1e-06,7.9e+07,1883,normal"));
    expect(ds.rows[0][0]).toBeCloseTo(1e-6, 12);
    expect(ds.rows[0][1]).toBe(79_000_000);
  });

  it("rejects unknown labels", () => {
    expect(() => parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,1883,tcp,1.5,79,1883,benign"))).toThrow(
      /unknown label/,
    );
  });

  it("rejects missing and non-numeric feature values", () => {
    expect(() => parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,1883,tcp,,79,1883,normal"))).toThrow(
      /missing or non-numeric/,
    );
    expect(() => parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,1883,tcp,fast,79,1883,normal"))).toThrow(
      /missing or non-numeric/,
    );
  });

  it("rejects a header that does not start with the endpoint columns", () => {
    const bad = ["ip,src_port,dst_ip,dst_port,l4,f,label", "a,1,b,2,tcp,3,normal"].join("\n");
    expect(() => parseFlowCsv(bad)).toThrow(/unexpected csv header/);
  });

  it("rejects ragged rows and empty input", () => {
    expect(() => parseFlowCsv(csv("10.1.0.2,5000,10.1.0.1,1883,tcp,1.5,79,normal"))).toThrow(
      /columns/,
    );
    expect(() => parseFlowCsv(HEADER)).toThrow(/no data rows/);
  });
});

describe("assertValidDataset", () => {
  it("accepts a two-class dataset", () => {
    assertValidDataset({ features: ["f"], rows: [[1], [2]], labels: [0, 1] });
  });

  it("calls out a single-class dataset", () => {
    expect(() =>
      assertValidDataset({ features: ["f"], rows: [[1], [2]], labels: [1, 1] }),
    ).toThrow("single-class dataset");
  });

  it("rejects NaN cells and misaligned shapes", () => {
    expect(() =>
      assertValidDataset({ features: ["f"], rows: [[NaN], [2]], labels: [0, 1] }),
    ).toThrow(/missing value/);
    expect(() =>
      assertValidDataset({ features: ["f", "g"], rows: [[1], [2]], labels: [0, 1] }),
    ).toThrow(/expected 2/);
  });
});

describe("selectFeatures", () => {
  const ds = {
    features: ["a", "b", "c"],
    rows: [
      [1, 2, 3],
      [4, 5, 6],
    ],
    labels: [0, 1],
  };

  it("keeps the requested columns in the requested order", () => {
    const sub = selectFeatures(ds, ["c", "a"]);
    expect(sub.features).toEqual(["c", "a"]);
    expect(sub.rows).toEqual([
      [3, 1],
      [6, 4],
    ]);
    expect(sub.labels).toEqual([0, 1]);
  });

  it("rejects names that do not exist", () => {
    expect(() => selectFeatures(ds, ["a", "nope"])).toThrow(/unknown feature/);
  });
});
