export { Dataset, parseFlowCsv, loadFlowCsv, selectFeatures, column, assertValidDataset } from "./dataset.js";
export { mutualInformationScores, selectTopK, binColumn, Binning, MiOptions, DEFAULT_BINS } from "./mi.js";
export { stratifiedSplit, SplitResult } from "./split.js";
export { ConfusionCounts, Metrics, computeMetrics, confusionCounts } from "./metrics.js";
export { NaiveBayesModel, trainNaiveBayes, predictNaiveBayes } from "./nb.js";
export { KnnModel, trainKnn, predictKnn, DEFAULT_K } from "./knn.js";
export { ForestModel, ForestOptions, trainForest, predictForest, DEFAULT_TREES } from "./forest.js";
export {
  ModelKind,
  ALL_MODELS,
  TrainEvalOptions,
  PipelineOptions,
  PipelineResult,
  ModelReport,
  trainEval,
  runPipeline,
  reportCsv,
  reportText,
} from "./pipeline.js";
export { mulberry32 } from "./rng.js";
