/**
 * Flat-array bindings for the anthrokit body-shape toolkit.
 *
 * Every function bridges to the core through its CLI and documented file
 * formats; data crosses the boundary as contiguous Float64Arrays only, and
 * core domain errors surface as CoreError with the core's error code.
 */

export { CoreError } from "./errors.js";
export {
  applyMapper,
  closeSession,
  fitMapper,
  fitShape,
  loadModel,
  measure,
  measureGradients,
  p2p20k,
} from "./session.js";
export type {
  BoundSession,
  FitShapeOptions,
  FitShapeResult,
  FitShapeTargets,
  MapperHandle,
  TrainingData,
} from "./session.js";
export { pythonBinary, runCore } from "./runner.js";

/** Mirrors the core package version. */
export const VERSION = "0.1.0";
