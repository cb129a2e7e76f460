import { Dataset, selectFeatures } from "./dataset.js";
import { trainForest, predictForest, DEFAULT_TREES } from "./forest.js";
import { trainKnn, predictKnn, DEFAULT_K } from "./knn.js";
import { Metrics, computeMetrics, confusionCounts } from "./metrics.js";
import { mutualInformationScores, selectTopK, DEFAULT_BINS, Binning } from "./mi.js";
import { trainNaiveBayes, predictNaiveBayes } from "./nb.js";
import { stratifiedSplit } from "./split.js";

export type ModelKind = "NB" | "KNN" | "RF";

export const ALL_MODELS: ModelKind[] = ["NB", "KNN", "RF"];

export interface TrainEvalOptions {
  testFraction?: number;
  knnK?: number;
  rfTrees?: number;
}

/**
 * Splits 80/20 (stratified), trains one model on the large side and scores
 * the small side. The seed drives both the split shuffle and, for the
 * forest, the bootstrap sampling; NB and KNN have no randomness of their own.
 */
export function trainEval(
  ds: Dataset,
  model: ModelKind,
  seed: number,
  opts: TrainEvalOptions = {},
): Metrics {
  const { train, test } = stratifiedSplit(ds, opts.testFraction ?? 0.2, seed);
  let predict: (row: number[]) => number;
  if (model === "NB") {
    const m = trainNaiveBayes(train.rows, train.labels);
    predict = (row) => predictNaiveBayes(m, row);
  } else if (model === "KNN") {
    const m = trainKnn(train.rows, train.labels, opts.knnK ?? DEFAULT_K);
    predict = (row) => predictKnn(m, row);
  } else if (model === "RF") {
    const m = trainForest(train.rows, train.labels, { trees: opts.rfTrees ?? DEFAULT_TREES, seed });
    predict = (row) => predictForest(m, row);
  } else {
    throw new Error(`unknown model ${JSON.stringify(model)}`);
  }
  const predicted = test.rows.map(predict);
  return computeMetrics(confusionCounts(predicted, test.labels));
}

export interface PipelineOptions extends TrainEvalOptions {
  seed?: number;
  topFeatures?: number;
  bins?: number;
  binning?: Binning;
  models?: ModelKind[];
}

export interface ModelReport {
  model: ModelKind;
  metrics: Metrics;
}

export interface PipelineResult {
  scores: Record<string, number>;
  selected: string[];
  reports: ModelReport[];
}

/** feature selection, then one train/eval round per model */
export function runPipeline(ds: Dataset, opts: PipelineOptions = {}): PipelineResult {
  const seed = opts.seed ?? 42;
  const scores = mutualInformationScores(ds, { bins: opts.bins ?? DEFAULT_BINS, binning: opts.binning });
  const selected = selectTopK(scores, opts.topFeatures ?? 10);
  const reduced = selectFeatures(ds, selected);
  const reports = (opts.models ?? ALL_MODELS).map((model) => ({
    model,
    metrics: trainEval(reduced, model, seed, opts),
  }));
  return { scores, selected, reports };
}

export function reportCsv(reports: ModelReport[]): string {
  const lines = ["model,sensitivity,specificity,accuracy"];
  for (const r of reports) {
    lines.push(
      `${r.model},${r.metrics.sensitivity.toFixed(2)},${r.metrics.specificity.toFixed(2)},${r.metrics.accuracy.toFixed(2)}`,
    );
  }
  return lines.join("\n") + "\n";
}

export function reportText(result: PipelineResult): string {
  const lines: string[] = [];
  lines.push(`selected features (${result.selected.length}): ${result.selected.join(", ")}`);
  lines.push("");
  lines.push("model  sensitivity  specificity  accuracy");
  for (const r of result.reports) {
    const m = r.metrics;
    lines.push(
      r.model.padEnd(5) +
        m.sensitivity.toFixed(2).padStart(12) +
        m.specificity.toFixed(2).padStart(13) +
        m.accuracy.toFixed(2).padStart(10),
    );
  }
  return lines.join("\n") + "\n";
}
