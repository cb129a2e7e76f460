export interface NaiveBayesModel {
  classes: number[];
  logPriors: number[];
  means: number[][];
  variances: number[][];
}

/**
 * Gaussian naive Bayes. Each feature gets a per-class normal fitted by mean
 * and population variance.
 *
 * Variances are floored per feature at 1e-9 times that feature's variance
 * over the whole training set (plus a tiny absolute epsilon for all-constant
 * columns). The floor must be per feature: tying it to the largest variance
 * of any feature lets a column measured in tens of millions flatten the
 * densities of a column measured in tens, and the class signal there with it.
 */
export function trainNaiveBayes(rows: number[][], labels: number[]): NaiveBayesModel {
  if (rows.length === 0 || rows.length !== labels.length) {
    throw new Error("training data and labels must be non-empty and aligned");
  }
  const nFeatures = rows[0].length;
  const classes = [...new Set(labels)].sort((a, b) => a - b);

  const globalVar = new Array<number>(nFeatures).fill(0);
  for (let j = 0; j < nFeatures; j++) {
    let mean = 0;
    for (const row of rows) mean += row[j];
    mean /= rows.length;
    let ss = 0;
    for (const row of rows) ss += (row[j] - mean) ** 2;
    globalVar[j] = ss / rows.length;
  }

  const logPriors: number[] = [];
  const means: number[][] = [];
  const variances: number[][] = [];
  for (const cls of classes) {
    const members = rows.filter((_, i) => labels[i] === cls);
    logPriors.push(Math.log(members.length / rows.length));
    const mu = new Array<number>(nFeatures).fill(0);
    const va = new Array<number>(nFeatures).fill(0);
    for (let j = 0; j < nFeatures; j++) {
      for (const row of members) mu[j] += row[j];
      mu[j] /= members.length;
      for (const row of members) va[j] += (row[j] - mu[j]) ** 2;
      va[j] /= members.length;
      const floor = 1e-9 * globalVar[j] + 1e-12;
      if (va[j] < floor) va[j] = floor;
    }
    means.push(mu);
    variances.push(va);
  }
  return { classes, logPriors, means, variances };
}

const LOG_2PI = Math.log(2 * Math.PI);

export function predictNaiveBayes(model: NaiveBayesModel, row: number[]): number {
  let best = model.classes[0];
  let bestScore = -Infinity;
  for (let c = 0; c < model.classes.length; c++) {
    let score = model.logPriors[c];
    for (let j = 0; j < row.length; j++) {
      const v = model.variances[c][j];
      const d = row[j] - model.means[c][j];
      score += -0.5 * (LOG_2PI + Math.log(v)) - (d * d) / (2 * v);
    }
    if (score > bestScore) {
      bestScore = score;
      best = model.classes[c];
    }
  }
  return best;
}
