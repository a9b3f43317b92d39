import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  ConfigError,
  EnvConfig,
  IllegalStateError,
  ShapeError,
  SimProcess,
  decodeFloat64,
  encodeFloat64,
} from "../dist/index.js";

const TINY: EnvConfig = {
  model: { n_households: 2, h_max: 50.0, gini_terminal_threshold: 1.0 },
  calibration: { kind: "point_mass", value: "100.0" },
  task: "gdp",
};

const GOV_NOOP = [0, 0, 0, 0, 0];

let sim: SimProcess;

beforeAll(() => {
  sim = new SimProcess();
});

afterAll(async () => {
  await sim.shutdown();
});

async function expectReject(
  promise: Promise<unknown>,
  cls: new (...args: never[]) => Error,
  pattern: RegExp,
): Promise<void> {
  let thrown: unknown = null;
  try {
    await promise;
  } catch (err) {
    thrown = err;
  }
  expect(thrown).toBeInstanceOf(cls);
  expect((thrown as Error).message).toMatch(pattern);
}

describe("configuration errors", () => {
  it("names an unknown model key", async () => {
    await expectReject(
      sim.createEnv({ model: { n_houses: 4 } }),
      ConfigError,
      /n_houses/,
    );
  });

  it("names an unknown config section", async () => {
    await expectReject(
      sim.createEnv({ modle: { n_households: 4 } }),
      ConfigError,
      /modle/,
    );
  });

  it("rejects an unknown reward task", async () => {
    await expectReject(
      sim.createEnv({ ...TINY, task: "fame" }),
      ConfigError,
      /fame|task/,
    );
  });
});

describe("shape errors", () => {
  it("rejects a 4-value government action", async () => {
    const env = await sim.createEnv(TINY);
    await env.reset(0);
    await expectReject(
      env.step([0, 0, 0, 0], new Float64Array(4)),
      ShapeError,
      /gov_action.*expected 5/,
    );
    await env.close();
  });

  it("rejects household actions shaped (N, 3)", async () => {
    const env = await sim.createEnv(TINY);
    await env.reset(0);
    await expectReject(
      env.step(GOV_NOOP, new Float64Array(2 * 3)),
      ShapeError,
      /hh_actions.*expected 2 x 2/,
    );
    await env.close();
  });

  it("is also enforced server-side", async () => {
    const env = await sim.createEnv(TINY);
    await env.reset(0);
    // bypass the client-side check to prove the server rejects too
    await expectReject(
      sim.request("step", {
        handle: env.handle,
        gov_action: encodeFloat64([0, 0, 0]),
        hh_actions: encodeFloat64(new Float64Array(4)),
      }),
      ShapeError,
      /gov_action/,
    );
    await env.close();
  });
});

describe("illegal states", () => {
  it("refuses to step a finished episode", async () => {
    const env = await sim.createEnv(TINY);
    await env.reset(0);
    // consume nearly everything while working nearly nothing
    const greedy = new Float64Array([1e-6, 1e-3, 1e-6, 1e-3]);
    const step = await env.step(GOV_NOOP, greedy);
    expect(step.done).toBe(true);
    expect(step.doneReason).toBe(3);
    await expectReject(
      env.step(GOV_NOOP, greedy),
      IllegalStateError,
      /episode end/,
    );
    await env.close();
  });

  it("refuses to step before the first reset", async () => {
    const env = await sim.createEnv(TINY);
    await expectReject(
      env.step(GOV_NOOP, new Float64Array(4)),
      IllegalStateError,
      /reset/,
    );
    await env.close();
  });

  it("refuses any use of a closed handle", async () => {
    const env = await sim.createEnv(TINY);
    await env.close();
    await expectReject(env.reset(0), IllegalStateError, /closed/);
    await expectReject(env.getMetrics(), IllegalStateError, /closed/);
  });

  it("rejects an unknown handle", async () => {
    await expectReject(
      sim.request("reset", { handle: "env999999" }),
      IllegalStateError,
      /unknown handle/,
    );
  });
});

describe("array codec", () => {
  it("round-trips values exactly", () => {
    const values = [0, -0, 1e300, -2.5e-308, 1 / 3, 6.02e23];
    const decoded = decodeFloat64(encodeFloat64(values), values.length, "x");
    for (let i = 0; i < values.length; i++) {
      expect(Object.is(decoded[i], values[i])).toBe(true);
    }
  });

  it("rejects a length mismatch", () => {
    expect(() => decodeFloat64(encodeFloat64([1, 2, 3]), 4, "probe")).toThrow(
      ShapeError,
    );
    expect(() => decodeFloat64(encodeFloat64([1, 2, 3]), 4, "probe")).toThrow(
      /probe.*expected 4.*got 3/,
    );
  });

  it("rejects byte counts that are not whole float64s", () => {
    expect(() => decodeFloat64("AAAA", 1, "probe")).toThrow(ShapeError);
  });
});
