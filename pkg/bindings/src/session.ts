import {
  copyFileSync,
  existsSync,
  mkdtempSync,
  readFileSync,
  rmSync,
  writeFileSync,
} from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { columnIndex, numericColumns, parseCsv, renderCsv } from "./csv.js";
import { CoreError } from "./errors.js";
import { runCore, withScratch } from "./runner.js";

const MEASUREMENT_FIELDS = ["height", "weight", "chest_circ", "waist_circ", "hip_circ"] as const;
const MEASURE_COLUMNS = ["height_m", "weight_kg", "chest_m", "waist_m", "hip_m"];
const SUBJECT_MEAS_COLUMNS = ["h_m", "w_kg", "c_m", "w_m", "hip_m"];

/** Opaque handle to a loaded model archive (plus owned scratch space). */
export interface BoundSession {
  readonly archivePath: string;
  readonly numBetas: number;
  readonly numVertices: number;
  readonly gender: string;
  /** set when the session owns a generated fixture directory */
  readonly ownedDir: string | null;
  closed: boolean;
}

interface ArchiveManifest {
  num_vertices: number;
  num_betas: number;
  gender: string;
  format?: string;
}

/** Open a model archive directory, or "fixture" for the built-in model. */
export function loadModel(archivePath: string): BoundSession {
  let owned: string | null = null;
  let resolved = archivePath;
  if (archivePath === "fixture") {
    owned = mkdtempSync(join(tmpdir(), "anthrokit-model-"));
    runCore(["fixture", "--out", owned, "--subjects", "0", "--seed", "0"]);
    resolved = join(owned, "model");
  }
  const manifestPath = join(resolved, "manifest.json");
  if (!existsSync(manifestPath)) {
    if (owned) rmSync(owned, { recursive: true, force: true });
    throw new CoreError("format_error", `model archive not found: ${resolved}`, {
      path: resolved,
    });
  }
  const manifest = JSON.parse(readFileSync(manifestPath, "utf8")) as ArchiveManifest;
  if (manifest.format !== "body-model-archive") {
    throw new CoreError("format_error", "not a body-model-archive manifest", {
      path: manifestPath,
    });
  }
  return {
    archivePath: resolved,
    numBetas: manifest.num_betas,
    numVertices: manifest.num_vertices,
    gender: manifest.gender,
    ownedDir: owned,
    closed: false,
  };
}

export function closeSession(session: BoundSession): void {
  if (session.ownedDir) {
    rmSync(session.ownedDir, { recursive: true, force: true });
  }
  session.closed = true;
}

function checkOpen(session: BoundSession): void {
  if (session.closed) {
    throw new CoreError("invalid_handle", "session is closed");
  }
}

function checkFlat(name: string, arr: Float64Array, count: number, width: number): void {
  if (!(arr instanceof Float64Array)) {
    throw new CoreError("invalid_value", `${name} must be a Float64Array`);
  }
  if (arr.length !== count * width) {
    throw new CoreError(
      "dimension_mismatch",
      `${name} has length ${arr.length}, expected ${count} x ${width} = ${count * width}`,
      { length: arr.length, count, width },
    );
  }
}

function writeBetasCsv(path: string, betas: Float64Array, count: number, width: number): string[] {
  // id convention matches the fixture population so outputs line up with
  // golden files row for row
  const ids = Array.from({ length: count }, (_, i) => `s${String(i).padStart(4, "0")}`);
  const header = ["subject_id", ...Array.from({ length: width }, (_, j) => `beta_${j}`)];
  const rows = ids.map((id, i) => [
    id,
    ...Array.from({ length: width }, (_, j) => betas[i * width + j]),
  ]);
  writeFileSync(path, renderCsv(header, rows as (string | number)[][]));
  return ids;
}

/** Measurements for a flat [count x numBetas] coefficient batch.
 *
 * Returns a flat [count x 5] array (height m, weight kg, chest/waist/hip m).
 * `outCsv` additionally keeps the core's raw CSV bytes at that path.
 */
export function measure(
  session: BoundSession,
  betas: Float64Array,
  count: number,
  opts: { outCsv?: string } = {},
): Float64Array {
  checkOpen(session);
  checkFlat("betas", betas, count, session.numBetas);
  return withScratch((dir) => {
    const betasPath = join(dir, "betas.csv");
    writeBetasCsv(betasPath, betas, count, session.numBetas);
    const outPath = join(dir, "measured.csv");
    runCore(["measure", "--model", session.archivePath, "--betas", betasPath, "--out", outPath]);
    if (opts.outCsv) {
      copyFileSync(outPath, opts.outCsv);
    }
    const table = parseCsv(readFileSync(outPath, "utf8"));
    return numericColumns(table, MEASURE_COLUMNS);
  });
}

/** Analytic measurement gradients for a flat coefficient batch.
 *
 * `gradients` is flat [count x 5 x numBetas] in measurement order height,
 * weight, chest, waist, hip; `nonSmooth[i*5+f]` flags hull-combinatorics
 * boundaries where the value is a subgradient.
 */
export function measureGradients(
  session: BoundSession,
  betas: Float64Array,
  count: number,
): { gradients: Float64Array; nonSmooth: Uint8Array; fields: readonly string[] } {
  checkOpen(session);
  checkFlat("betas", betas, count, session.numBetas);
  return withScratch((dir) => {
    const betasPath = join(dir, "betas.csv");
    writeBetasCsv(betasPath, betas, count, session.numBetas);
    const gradsPath = join(dir, "grads.csv");
    runCore([
      "measure", "--model", session.archivePath, "--betas", betasPath,
      "--out", join(dir, "measured.csv"), "--gradients", gradsPath,
    ]);
    const table = parseCsv(readFileSync(gradsPath, "utf8"));
    const b = session.numBetas;
    const gradients = new Float64Array(count * 5 * b);
    const nonSmooth = new Uint8Array(count * 5);
    const fieldCol = columnIndex(table, "field");
    const flagCol = columnIndex(table, "non_smooth");
    const dCols = Array.from({ length: b }, (_, j) => columnIndex(table, `d_beta_${j}`));
    table.rows.forEach((row, r) => {
      const subject = Math.floor(r / 5);
      const field = MEASUREMENT_FIELDS.indexOf(row[fieldCol] as never);
      if (field < 0) {
        throw new CoreError("format_error", `unexpected gradient field '${row[fieldCol]}'`);
      }
      nonSmooth[subject * 5 + field] = Number(row[flagCol]);
      dCols.forEach((c, j) => {
        gradients[(subject * 5 + field) * b + j] = Number(row[c]);
      });
    });
    return { gradients, nonSmooth, fields: MEASUREMENT_FIELDS };
  });
}

export interface TrainingData {
  count: number;
  /** flat [count x 5]: height m, weight kg, chest, waist, hip m; NaN = missing */
  measurements?: Float64Array;
  /** flat [count x attributeNames.length], scores in [1, 5] */
  attributes?: Float64Array;
  attributeNames?: string[];
  /** flat [count x numBetas] */
  betas?: Float64Array;
  numBetas?: number;
}

function writeSubjectTable(path: string, data: TrainingData): void {
  const attrNames = data.attributeNames ?? [];
  if (data.attributes) {
    if (attrNames.length === 0) {
      throw new CoreError("invalid_value", "attributes need attributeNames");
    }
    checkFlat("attributes", data.attributes, data.count, attrNames.length);
  }
  if (data.measurements) {
    checkFlat("measurements", data.measurements, data.count, 5);
  }
  const nb = data.numBetas ?? 0;
  if (data.betas) {
    if (!nb) {
      throw new CoreError("invalid_value", "betas need numBetas");
    }
    checkFlat("betas", data.betas, data.count, nb);
  }
  const header = ["subject_id", "gender", ...SUBJECT_MEAS_COLUMNS];
  attrNames.forEach((n) => header.push(`attr_${n}`));
  for (let j = 0; j < (data.betas ? nb : 0); j += 1) header.push(`beta_${j}`);

  const rows: (string | number)[][] = [];
  for (let i = 0; i < data.count; i += 1) {
    const row: (string | number)[] = [`s${String(i).padStart(4, "0")}`, "neutral"];
    for (let j = 0; j < 5; j += 1) {
      const v = data.measurements ? data.measurements[i * 5 + j] : NaN;
      row.push(Number.isNaN(v) ? "" : v);
    }
    attrNames.forEach((_, j) => row.push(data.attributes![i * attrNames.length + j]));
    if (data.betas) {
      for (let j = 0; j < nb; j += 1) row.push(data.betas[i * nb + j]);
    }
    rows.push(row);
  }
  writeFileSync(path, renderCsv(header, rows));
}

export interface MapperHandle {
  dir: string;
  variant: string;
  trainRmse: number;
  rows: number;
  features: number;
}

/** Fit a polynomial mapper from flat training arrays; the fitted mapper
 * lives at `outDir` in the documented mapper format. */
export function fitMapper(
  train: TrainingData,
  opts: { variant: string; outDir: string; degree?: 1 | 2; ridge?: number },
): MapperHandle {
  return withScratch((dir) => {
    const trainPath = join(dir, "train.csv");
    writeSubjectTable(trainPath, train);
    const args = [
      "fit-mapper", "--train", trainPath, "--variant", opts.variant, "--out", opts.outDir,
    ];
    if (opts.degree !== undefined) args.push("--degree", String(opts.degree));
    if (opts.ridge !== undefined) args.push("--ridge", String(opts.ridge));
    const summary = JSON.parse(runCore(args)) as {
      train_rmse: number;
      rows: number;
      features: number;
    };
    return {
      dir: opts.outDir,
      variant: opts.variant,
      trainRmse: summary.train_rmse,
      rows: summary.rows,
      features: summary.features,
    };
  });
}

interface MapperManifest {
  channels: string[];
  channel_dims: number[];
  output_kind: "betas" | "attribute_scores";
  output_dim: number;
  attribute_names: string[];
}

function readMapperManifest(mapperDir: string): MapperManifest {
  const path = join(mapperDir, "mapper.json");
  if (!existsSync(path)) {
    throw new CoreError("format_error", `mapper manifest not found: ${path}`, { path });
  }
  return JSON.parse(readFileSync(path, "utf8")) as MapperManifest;
}

/** Apply a fitted mapper to flat raw inputs.
 *
 * Input columns follow the mapper's channel order (see mapper.json) in
 * physical units: attribute scores, then height in meters / weight in kg /
 * circumferences in meters as the channels dictate. Returns flat
 * [count x outputDim] predictions.
 */
export function applyMapper(
  mapperDir: string,
  inputs: Float64Array,
  count: number,
): Float64Array {
  const manifest = readMapperManifest(mapperDir);
  const width = manifest.channel_dims.reduce((a, b) => a + b, 0);
  checkFlat("inputs", inputs, count, width);

  return withScratch((dir) => {
    // scatter flat channel-ordered columns into named subject-table columns
    const header = ["subject_id", "gender"];
    const colOf: { col: number; name: string }[] = [];
    let flat = 0;
    manifest.channels.forEach((ch, k) => {
      const dim = manifest.channel_dims[k];
      if (ch === "attributes") {
        manifest.attribute_names.forEach((n, j) => {
          colOf.push({ col: flat + j, name: `attr_${n}` });
        });
      } else if (ch === "betas") {
        for (let j = 0; j < dim; j += 1) colOf.push({ col: flat + j, name: `beta_${j}` });
      } else {
        const name = { height_cm: "h_m", cbrt_weight: "w_kg", chest_m: "c_m",
                       waist_m: "w_m", hip_m: "hip_m" }[ch];
        if (!name) {
          throw new CoreError("format_error", `unknown mapper channel '${ch}'`);
        }
        colOf.push({ col: flat, name });
      }
      flat += dim;
    });
    colOf.forEach((c) => header.push(c.name));
    const rows: (string | number)[][] = [];
    for (let i = 0; i < count; i += 1) {
      const row: (string | number)[] = [`s${String(i).padStart(4, "0")}`, "neutral"];
      colOf.forEach((c) => row.push(inputs[i * width + c.col]));
      rows.push(row);
    }
    const inputPath = join(dir, "input.csv");
    writeFileSync(inputPath, renderCsv(header, rows));
    const outPath = join(dir, "pred.csv");
    runCore(["predict", "--mapper", mapperDir, "--input", inputPath, "--out", outPath]);
    const table = parseCsv(readFileSync(outPath, "utf8"));
    const names =
      manifest.output_kind === "betas"
        ? Array.from({ length: manifest.output_dim }, (_, j) => `beta_${j}`)
        : table.header.filter((h) => h.startsWith("attr_"));
    return numericColumns(table, names);
  });
}

export interface FitShapeTargets {
  count: number;
  /** flat [count x attributeNames.length]; requires an S2A mapper in mappersDir */
  attributes?: Float64Array;
  attributeNames?: string[];
  heights?: Float64Array;
  chests?: Float64Array;
  waists?: Float64Array;
  hips?: Float64Array;
}

export interface FitShapeOptions {
  mappersDir?: string;
  weights?: { attributes?: number; height?: number; circumference?: number; regularizer?: number };
  maxIters?: number;
  tol?: number;
  stepRule?: "gauss_newton" | "gradient" | "adam";
}

export interface FitShapeResult {
  betas: Float64Array;       // flat [count x numBetas]
  loss: Float64Array;        // [count]
  iterations: Int32Array;    // [count]
  converged: Uint8Array;     // [count]
  nonSmooth: Int32Array;     // [count]
}

/** Recover shape coefficients per subject from measurement/attribute targets. */
export function fitShape(
  session: BoundSession,
  targets: FitShapeTargets,
  opts: FitShapeOptions = {},
): FitShapeResult {
  checkOpen(session);
  const n = targets.count;
  for (const [name, arr] of [["heights", targets.heights], ["chests", targets.chests],
                             ["waists", targets.waists], ["hips", targets.hips]] as const) {
    if (arr) checkFlat(name, arr, n, 1);
  }
  const attrNames = targets.attributeNames ?? [];
  if (targets.attributes) {
    if (attrNames.length === 0) {
      throw new CoreError("invalid_value", "attribute targets need attributeNames");
    }
    checkFlat("attributes", targets.attributes, n, attrNames.length);
  }

  return withScratch((dir) => {
    const header = ["subject_id", "gender", ...SUBJECT_MEAS_COLUMNS];
    attrNames.forEach((a) => header.push(`attr_${a}`));
    const rows: (string | number)[][] = [];
    for (let i = 0; i < n; i += 1) {
      const cellOf = (arr?: Float64Array) =>
        arr && !Number.isNaN(arr[i]) ? arr[i] : "";
      const row: (string | number)[] = [
        `s${String(i).padStart(4, "0")}`, "neutral",
        cellOf(targets.heights), "", cellOf(targets.chests), cellOf(targets.waists),
        cellOf(targets.hips),
      ];
      attrNames.forEach((_, j) => row.push(targets.attributes![i * attrNames.length + j]));
      rows.push(row);
    }
    const targetsPath = join(dir, "targets.csv");
    writeFileSync(targetsPath, renderCsv(header, rows));

    const use = [
      targets.attributes ? "attributes" : null,
      targets.heights ? "height" : null,
      targets.chests || targets.waists || targets.hips ? "circumference" : null,
    ].filter((u): u is string => u !== null);
    if (use.length === 0) {
      throw new CoreError("invalid_value", "at least one target family must be present");
    }
    const outPath = join(dir, "fitted.csv");
    const reportPath = join(dir, "fitloss.csv");
    const args = [
      "fit-shape", "--model", session.archivePath, "--targets", targetsPath,
      "--out", outPath, "--report", reportPath, "--use", use.join(","),
    ];
    if (opts.mappersDir) args.push("--mappers", opts.mappersDir);
    const w = opts.weights ?? {};
    if (w.attributes !== undefined) args.push("--w-attributes", String(w.attributes));
    if (w.height !== undefined) args.push("--w-height", String(w.height));
    if (w.circumference !== undefined) args.push("--w-circumference", String(w.circumference));
    if (w.regularizer !== undefined) args.push("--w-regularizer", String(w.regularizer));
    if (opts.maxIters !== undefined) args.push("--max-iters", String(opts.maxIters));
    if (opts.tol !== undefined) args.push("--tol", String(opts.tol));
    if (opts.stepRule) args.push("--step-rule", opts.stepRule);
    runCore(args);

    const fitted = parseCsv(readFileSync(outPath, "utf8"));
    const names = Array.from({ length: session.numBetas }, (_, j) => `beta_${j}`);
    const betas = numericColumns(fitted, names);
    const report = parseCsv(readFileSync(reportPath, "utf8"));
    const lossCol = columnIndex(report, "loss");
    const iterCol = columnIndex(report, "iterations");
    const convCol = columnIndex(report, "converged");
    const nsCol = columnIndex(report, "non_smooth");
    const loss = new Float64Array(n);
    const iterations = new Int32Array(n);
    const converged = new Uint8Array(n);
    const nonSmooth = new Int32Array(n);
    report.rows.forEach((row, i) => {
      loss[i] = Number(row[lossCol]);
      iterations[i] = Number(row[iterCol]);
      converged[i] = Number(row[convCol]);
      nonSmooth[i] = Number(row[nsCol]);
    });
    return { betas, loss, iterations, converged, nonSmooth };
  });
}

/** Sampled point-to-point error (mm) between two coefficient batches.
 *
 * Returns per-pair distances and their mean; `points`/`seed` select the
 * cached surface-point regressor.
 */
export function p2p20k(
  session: BoundSession,
  betas1: Float64Array,
  betas2: Float64Array,
  count: number,
  opts: { points?: number; seed?: number } = {},
): { perPair: Float64Array; mean: number } {
  checkOpen(session);
  checkFlat("betas1", betas1, count, session.numBetas);
  checkFlat("betas2", betas2, count, session.numBetas);
  return withScratch((dir) => {
    const p1 = join(dir, "pred.csv");
    const p2 = join(dir, "gt.csv");
    writeBetasCsv(p1, betas1, count, session.numBetas);
    writeBetasCsv(p2, betas2, count, session.numBetas);
    const outJson = join(dir, "eval.json");
    const outCsv = join(dir, "eval.csv");
    const args = [
      "eval", "--model", session.archivePath, "--pred", p1, "--gt", p2,
      "--out-json", outJson, "--out-csv", outCsv,
    ];
    if (opts.points !== undefined) args.push("--points", String(opts.points));
    if (opts.seed !== undefined) args.push("--seed", String(opts.seed));
    runCore(args);
    const table = parseCsv(readFileSync(outCsv, "utf8"));
    const perPair = numericColumns(table, ["p2p20k_mm"]);
    const summary = JSON.parse(readFileSync(outJson, "utf8")) as {
      metrics: { p2p20k_mm: number };
    };
    return { perPair, mean: summary.metrics.p2p20k_mm };
  });
}
