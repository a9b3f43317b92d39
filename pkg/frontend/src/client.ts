import { spawn, type ChildProcess } from "node:child_process";
import { createInterface } from "node:readline";

import { decodeFloat64, encodeFloat64 } from "./codec.js";
import {
  BridgeError,
  IllegalStateError,
  ShapeError,
  errorFromWire,
} from "./errors.js";

export const GOV_OBS_DIM = 7;
export const HH_OBS_DIM = 9;
export const GOV_ACTION_DIM = 5;
export const HH_ACTION_DIM = 2;

/**
 * Environment configuration, passed through to the simulator unchanged.
 * The simulator owns validation and rejects unknown sections or keys
 * with a ConfigError naming the offender.
 */
export interface EnvConfig {
  model?: Record<string, number | string | boolean>;
  calibration?: Record<string, number | string>;
  task?: string;
  omega1?: number;
  omega2?: number;
  [key: string]: unknown;
}

export interface ResetResult {
  /** Government observation, length 7. */
  govObs: Float64Array;
  /** Household observations, row-major N x 9. */
  hhObs: Float64Array;
}

/** One simulation step as seen through the bindings. */
export interface FlatStep {
  govObs: Float64Array;
  hhObs: Float64Array;
  govReward: number;
  hhRewards: Float64Array;
  done: boolean;
  /** 0 while running; termination code table in the simulator docs. */
  doneReason: number;
  /** Per-step indicators (gdp, wealth_gini, ...), keyed as on the wire. */
  info: Record<string, number>;
}

export interface SimStats {
  openHandles: number;
  rssBytes: number;
}

export interface SimProcessOptions {
  /** Python interpreter to launch, default "python3". */
  pythonBin?: string;
  /** Full argument list, default ["-m", "taxecon.cli", "serve"]. */
  args?: string[];
  cwd?: string;
  env?: NodeJS.ProcessEnv;
}

interface Pending {
  id: number;
  resolve: (result: Record<string, unknown>) => void;
  reject: (err: Error) => void;
}

/**
 * A simulator server process and the request pipe into it.
 *
 * Speaks one JSON request per line on the child's stdin and reads one
 * JSON response per line from its stdout. Responses arrive in request
 * order, so correlation is a FIFO checked against the echoed id.
 * Requests may be issued without awaiting the previous one; they
 * pipeline through the child in order.
 *
 * @example
 * ```ts
 * const sim = new SimProcess();
 * const env = await sim.createEnv({ model: { n_households: 100 } }, 0);
 * const { govObs, hhObs } = await env.reset(0);
 * const step = await env.step(new Float64Array([0.2, 0, 0, 0, 0.1]), hhActions);
 * await env.close();
 * await sim.shutdown();
 * ```
 */
export class SimProcess {
  private proc: ChildProcess;
  private pending: Pending[] = [];
  private nextId = 1;
  private down: Error | null = null;
  private stderrTail = "";
  private exited: Promise<number | null>;

  constructor(options: SimProcessOptions = {}) {
    const bin = options.pythonBin ?? "python3";
    const args = options.args ?? ["-m", "taxecon.cli", "serve"];
    this.proc = spawn(bin, args, {
      cwd: options.cwd,
      env: options.env,
      stdio: ["pipe", "pipe", "pipe"],
    });

    const lines = createInterface({ input: this.proc.stdout! });
    lines.on("line", (line) => this.onLine(line));
    this.proc.stderr!.on("data", (chunk: Buffer) => {
      this.stderrTail = (this.stderrTail + chunk.toString()).slice(-8192);
    });

    this.exited = new Promise((resolve) => {
      this.proc.on("error", (err) => {
        this.fail(new BridgeError(`failed to start ${bin}: ${err.message}`));
        resolve(null);
      });
      this.proc.on("close", (code) => {
        if (this.down === null && this.pending.length > 0) {
          this.fail(
            new BridgeError(
              `server exited with code ${code}` +
                (this.stderrTail ? `; stderr: ${this.stderrTail.trim()}` : ""),
            ),
          );
        }
        resolve(code);
      });
    });
  }

  private onLine(line: string): void {
    const waiter = this.pending.shift();
    if (!waiter) {
      return; // response with nothing waiting; nothing to deliver to
    }
    let resp: {
      id?: unknown;
      ok?: unknown;
      result?: Record<string, unknown>;
      error?: { type?: string; message?: string };
    };
    try {
      resp = JSON.parse(line);
    } catch {
      waiter.reject(new BridgeError(`unparseable response: ${line.slice(0, 200)}`));
      return;
    }
    if (resp.id !== waiter.id) {
      waiter.reject(
        new BridgeError(`response id ${resp.id} does not match request ${waiter.id}`),
      );
      return;
    }
    if (resp.ok) {
      waiter.resolve(resp.result ?? {});
    } else {
      const err = resp.error ?? {};
      waiter.reject(errorFromWire(err.type ?? "Unknown", err.message ?? ""));
    }
  }

  private fail(err: Error): void {
    this.down = err;
    const waiting = this.pending;
    this.pending = [];
    for (const w of waiting) {
      w.reject(err);
    }
  }

  /** Send one raw request; resolves with the response's result object. */
  request(
    op: string,
    payload: Record<string, unknown> = {},
  ): Promise<Record<string, unknown>> {
    if (this.down) {
      return Promise.reject(
        this.down instanceof BridgeError && this.down.message === "shut down"
          ? new IllegalStateError("simulator process already shut down")
          : this.down,
      );
    }
    const id = this.nextId++;
    return new Promise((resolve, reject) => {
      this.pending.push({ id, resolve, reject });
      this.proc.stdin!.write(JSON.stringify({ id, op, ...payload }) + "\n");
    });
  }

  /** Create an environment; the simulator validates the config. */
  async createEnv(config: EnvConfig = {}, seed = 0): Promise<EnvHandle> {
    const result = await this.request("create", { config, seed });
    return new EnvHandle(this, result.handle as string, result.n as number);
  }

  /** Open handle count and server RSS, for resource accounting. */
  async stats(): Promise<SimStats> {
    const r = await this.request("stats");
    return {
      openHandles: r.open_handles as number,
      rssBytes: r.rss_bytes as number,
    };
  }

  /** Graceful shutdown: drains in-flight requests, waits for exit. */
  async shutdown(): Promise<void> {
    await this.request("shutdown");
    this.down = new BridgeError("shut down");
    this.proc.stdin!.end();
    await this.exited;
  }

  /** Hard teardown for abnormal paths; prefer shutdown(). */
  kill(): void {
    this.fail(new BridgeError("killed"));
    this.proc.kill();
  }
}

/**
 * One simulated economy held by the server.
 *
 * Handles are independent: stepping one never affects another. A handle
 * must not be stepped concurrently with itself (requests would
 * interleave but the episode is a single sequential object).
 */
export class EnvHandle {
  private closed = false;

  constructor(
    private readonly sim: SimProcess,
    /** Opaque server-side identifier. */
    readonly handle: string,
    /** Household count; fixes all array lengths for this handle. */
    readonly n: number,
  ) {}

  private guard(): void {
    if (this.closed) {
      throw new IllegalStateError(`handle ${this.handle} is closed`);
    }
  }

  /** Start a new episode; omit the seed to reuse the creation seed. */
  async reset(seed?: number): Promise<ResetResult> {
    this.guard();
    const payload: Record<string, unknown> = { handle: this.handle };
    if (seed !== undefined) {
      payload.seed = seed;
    }
    const r = await this.sim.request("reset", payload);
    return this.observations(r);
  }

  /**
   * Advance one period.
   *
   * @param govAction 5 values: income-tax level and progressivity,
   *   asset-tax level and progressivity, spending share.
   * @param hhActions N x 2 row-major: savings ratio and hours fraction
   *   per household.
   */
  async step(
    govAction: ArrayLike<number>,
    hhActions: ArrayLike<number>,
  ): Promise<FlatStep> {
    this.guard();
    if (govAction.length !== GOV_ACTION_DIM) {
      throw new ShapeError(
        `gov_action: expected ${GOV_ACTION_DIM} values, got ${govAction.length}`,
      );
    }
    if (hhActions.length !== this.n * HH_ACTION_DIM) {
      throw new ShapeError(
        `hh_actions: expected ${this.n} x ${HH_ACTION_DIM} = ` +
          `${this.n * HH_ACTION_DIM} values, got ${hhActions.length}`,
      );
    }
    const r = await this.sim.request("step", {
      handle: this.handle,
      gov_action: encodeFloat64(govAction),
      hh_actions: encodeFloat64(hhActions),
    });
    return {
      ...this.observations(r),
      govReward: r.gov_reward as number,
      hhRewards: decodeFloat64(r.hh_rewards as string, this.n, "hh_rewards"),
      done: r.done as boolean,
      doneReason: r.done_reason as number,
      info: r.info as Record<string, number>,
    };
  }

  /** Metrics rows recorded so far, as CSV text. */
  async getMetrics(): Promise<{ csv: string; steps: number }> {
    this.guard();
    const r = await this.sim.request("get_metrics", { handle: this.handle });
    return { csv: r.csv as string, steps: r.steps as number };
  }

  /** Release the server-side environment; the handle is dead after. */
  async close(): Promise<void> {
    this.guard();
    this.closed = true;
    await this.sim.request("close", { handle: this.handle });
  }

  private observations(r: Record<string, unknown>): ResetResult {
    return {
      govObs: decodeFloat64(r.gov_obs as string, GOV_OBS_DIM, "gov_obs"),
      hhObs: decodeFloat64(
        r.hh_obs as string,
        this.n * HH_OBS_DIM,
        "hh_obs",
      ),
    };
  }
}
