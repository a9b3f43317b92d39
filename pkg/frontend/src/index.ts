export {
  EnvHandle,
  SimProcess,
  GOV_ACTION_DIM,
  GOV_OBS_DIM,
  HH_ACTION_DIM,
  HH_OBS_DIM,
} from "./client.js";
export type {
  EnvConfig,
  FlatStep,
  ResetResult,
  SimProcessOptions,
  SimStats,
} from "./client.js";
export { decodeFloat64, encodeFloat64 } from "./codec.js";
export {
  BridgeError,
  ConfigError,
  IllegalStateError,
  ShapeError,
  SimulatorError,
} from "./errors.js";
