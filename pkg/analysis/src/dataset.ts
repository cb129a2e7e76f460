import * as fs from "node:fs";
import Papa from "papaparse";

/**
 * A labeled flow table. Rows are flows, columns are the numeric features
 * from the capture CSV; labels are 1 for attack and 0 for normal.
 */
export interface Dataset {
  features: string[];
  rows: number[][];
  labels: number[];
}

// leading identity columns of the capture CSV, never used as model input
const ID_COLUMNS = ["src_ip", "src_port", "dst_ip", "dst_port", "l4"];
const LABEL_COLUMN = "label";

const LABEL_VALUES: Record<string, number> = { normal: 0, attack: 1 };

/**
 * Parses the capture CSV produced by the traffic generator. The first five
 * columns identify the flow endpoints and are dropped; everything between
 * them and the trailing label column is treated as a feature. Columns are
 * taken by position because dst_port legitimately appears twice (once as an
 * endpoint, once as a feature).
 */
export function parseFlowCsv(text: string): Dataset {
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    const e = parsed.errors[0];
    throw new Error(`csv parse error at row ${e.row}: ${e.message}`);
  }
  const grid = parsed.data;
  if (grid.length < 2) {
    throw new Error("csv has no data rows");
  }

  const header = grid[0];
  for (let i = 0; i < ID_COLUMNS.length; i++) {
    if (header[i] !== ID_COLUMNS[i]) {
      throw new Error(
        `unexpected csv header: column ${i} is ${JSON.stringify(header[i])}, expected ${ID_COLUMNS[i]}`,
      );
    }
  }
  if (header[header.length - 1] !== LABEL_COLUMN) {
    throw new Error("unexpected csv header: last column must be label");
  }
  const features = header.slice(ID_COLUMNS.length, header.length - 1);
  if (features.length === 0) {
    throw new Error("csv has no feature columns");
  }

  const rows: number[][] = [];
  const labels: number[] = [];
  for (let r = 1; r < grid.length; r++) {
    const line = grid[r];
    if (line.length !== header.length) {
      throw new Error(`row ${r} has ${line.length} columns, header has ${header.length}`);
    }
    const row: number[] = [];
    for (let j = 0; j < features.length; j++) {
      const raw = line[ID_COLUMNS.length + j];
      const v = raw === "" ? NaN : Number(raw);
      if (!Number.isFinite(v)) {
        throw new Error(`missing or non-numeric value for ${features[j]} in row ${r}`);
      }
      row.push(v);
    }
    const label = LABEL_VALUES[line[line.length - 1]];
    if (label === undefined) {
      throw new Error(`unknown label ${JSON.stringify(line[line.length - 1])} in row ${r}`);
    }
    rows.push(row);
    labels.push(label);
  }
  return { features, rows, labels };
}

export function loadFlowCsv(path: string): Dataset {
  return parseFlowCsv(fs.readFileSync(path, "utf8"));
}

/**
 * Shape and content checks shared by everything that consumes a Dataset.
 * A dataset whose labels are all one class is unusable both for mutual
 * information and for training, hence the dedicated message.
 */
export function assertValidDataset(ds: Dataset): void {
  if (ds.rows.length === 0) {
    throw new Error("empty dataset");
  }
  if (ds.rows.length !== ds.labels.length) {
    throw new Error(`${ds.rows.length} rows but ${ds.labels.length} labels`);
  }
  for (let i = 0; i < ds.rows.length; i++) {
    if (ds.rows[i].length !== ds.features.length) {
      throw new Error(`row ${i} has ${ds.rows[i].length} values, expected ${ds.features.length}`);
    }
    for (const v of ds.rows[i]) {
      if (!Number.isFinite(v)) {
        throw new Error(`missing value in row ${i}`);
      }
    }
  }
  const first = ds.labels[0];
  if (ds.labels.every((l) => l === first)) {
    throw new Error("single-class dataset");
  }
}

/** Column subset in the given order; names must exist. */
export function selectFeatures(ds: Dataset, names: string[]): Dataset {
  const indices = names.map((name) => {
    const idx = ds.features.indexOf(name);
    if (idx < 0) {
      throw new Error(`unknown feature ${JSON.stringify(name)}`);
    }
    return idx;
  });
  return {
    features: [...names],
    rows: ds.rows.map((row) => indices.map((i) => row[i])),
    labels: [...ds.labels],
  };
}

/** values of one feature column */
export function column(ds: Dataset, feature: string): number[] {
  const idx = ds.features.indexOf(feature);
  if (idx < 0) {
    throw new Error(`unknown feature ${JSON.stringify(feature)}`);
  }
  return ds.rows.map((row) => row[idx]);
}
