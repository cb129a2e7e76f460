export interface ConfusionCounts {
  tp: number;
  tn: number;
  fp: number;
  fn: number;
}

export interface Metrics {
  sensitivity: number;
  specificity: number;
  accuracy: number;
}

/** Tallies predictions against truth; 1 is the positive (attack) class. */
export function confusionCounts(predicted: number[], actual: number[]): ConfusionCounts {
  if (predicted.length !== actual.length) {
    throw new Error(`${predicted.length} predictions for ${actual.length} samples`);
  }
  const c = { tp: 0, tn: 0, fp: 0, fn: 0 };
  for (let i = 0; i < actual.length; i++) {
    if (actual[i] === 1) {
      if (predicted[i] === 1) c.tp++;
      else c.fn++;
    } else {
      if (predicted[i] === 1) c.fp++;
      else c.tn++;
    }
  }
  return c;
}

/**
 * Sensitivity, specificity and accuracy as percentages.
 *
 *   sensitivity = 100 * TP / (TP + FN)   attack-detection rate
 *   specificity = 100 * TN / (TN + FP)   normal-traffic pass rate
 *   accuracy    = 100 * (TP + TN) / total
 *
 * A test set with no attack samples (TP + FN = 0) cannot say anything about
 * detection and is rejected as a degenerate split. A test set with no normal
 * samples leaves specificity 0/0 with zero false positives; nothing was
 * misflagged, so that reads as a vacuous 100.
 */
export function computeMetrics(c: ConfusionCounts): Metrics {
  for (const [name, v] of Object.entries(c)) {
    if (!Number.isInteger(v) || v < 0) {
      throw new Error(`${name} must be a nonnegative integer, got ${v}`);
    }
  }
  const total = c.tp + c.tn + c.fp + c.fn;
  if (total === 0) {
    throw new Error("confusion counts sum to zero");
  }
  if (c.tp + c.fn === 0) {
    throw new Error("degenerate split: no attack samples in the test set");
  }
  const sensitivity = (100 * c.tp) / (c.tp + c.fn);
  const specificity = c.tn + c.fp === 0 ? 100 : (100 * c.tn) / (c.tn + c.fp);
  const accuracy = (100 * (c.tp + c.tn)) / total;
  return { sensitivity, specificity, accuracy };
}
