#!/usr/bin/env node
import * as fs from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { loadFlowCsv } from "./dataset.js";
import { runPipeline, reportCsv, reportText } from "./pipeline.js";

const argv = yargs(hideBin(process.argv))
  .usage("$0 <flows>", "Train NB/KNN/RF detectors on a labeled flow CSV and report metrics", (y) =>
    y.positional("flows", { type: "string", demandOption: true, describe: "capture CSV with a label column" }),
  )
  .option("seed", { type: "number", default: 42, describe: "split and bootstrap seed" })
  .option("top", { type: "number", default: 10, describe: "features kept by mutual information" })
  .option("bins", { type: "number", default: 10, describe: "discretization bins for MI" })
  .option("csv", { type: "string", describe: "write the metrics table as CSV to this path" })
  .option("text", { type: "string", describe: "write the plain-text report to this path" })
  .strict()
  .parseSync();

try {
  const ds = loadFlowCsv(argv.flows as string);
  const result = runPipeline(ds, { seed: argv.seed, topFeatures: argv.top, bins: argv.bins });
  const text = reportText(result);
  process.stdout.write(text);
  if (argv.csv) {
    fs.writeFileSync(argv.csv, reportCsv(result.reports));
  }
  if (argv.text) {
    fs.writeFileSync(argv.text, text);
  }
} catch (err) {
  console.error(`error: ${err instanceof Error ? err.message : err}`);
  process.exit(1);
}
