/** Error taxonomy mirroring the simulator's wire-level error types. */

export class SimulatorError extends Error {
  constructor(message: string) {
    super(message);
    this.name = new.target.name;
  }
}

/** Invalid configuration; the message names the offending key or value. */
export class ConfigError extends SimulatorError {}

/** An array had the wrong length for its declared role. */
export class ShapeError extends SimulatorError {}

/** Operation out of sequence: step after done, use after close, bad handle. */
export class IllegalStateError extends SimulatorError {}

/** Protocol-level failure: malformed traffic, server crash, unknown error type. */
export class BridgeError extends SimulatorError {}

const WIRE_TYPES: Record<string, new (message: string) => SimulatorError> = {
  ConfigError: ConfigError,
  ShapeError: ShapeError,
  IllegalState: IllegalStateError,
};

/** Turn a wire error payload into the matching exception class. */
export function errorFromWire(type: string, message: string): SimulatorError {
  const cls = WIRE_TYPES[type];
  return cls ? new cls(message) : new BridgeError(`${type}: ${message}`);
}
