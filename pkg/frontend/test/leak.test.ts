import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { EnvConfig, SimProcess } from "../dist/index.js";

const CYCLES = 100_000;
const BATCH = 500;
const WARMUP = 2_000;
// allocator arenas plateau after warmup; a real per-cycle leak of even
// a few hundred bytes would add tens of megabytes over 1e5 cycles
const ALLOWED_GROWTH = 32 * 1024 * 1024;

const TINY: EnvConfig = {
  model: { n_households: 2, gini_terminal_threshold: 1.0 },
  calibration: { kind: "point_mass", value: "100.0" },
};

let sim: SimProcess;

beforeAll(() => {
  sim = new SimProcess();
});

afterAll(async () => {
  await sim.shutdown();
});

async function churn(cycles: number): Promise<void> {
  for (let done = 0; done < cycles; done += BATCH) {
    const size = Math.min(BATCH, cycles - done);
    const envs = await Promise.all(
      Array.from({ length: size }, (_, i) => sim.createEnv(TINY, done + i)),
    );
    await Promise.all(envs.map((env) => env.close()));
  }
}

describe("resource lifecycle", () => {
  it(
    `does not leak over ${CYCLES} create/close cycles`,
    async () => {
      await churn(WARMUP);
      const before = await sim.stats();
      expect(before.openHandles).toBe(0);

      await churn(CYCLES);

      const after = await sim.stats();
      expect(after.openHandles).toBe(0);
      const growth = after.rssBytes - before.rssBytes;
      expect(
        growth,
        `rss grew ${(growth / 1024 / 1024).toFixed(1)} MiB over ${CYCLES} cycles`,
      ).toBeLessThan(ALLOWED_GROWTH);
    },
    300_000,
  );

  it("frees a handle on close and reports it", async () => {
    const before = await sim.stats();
    const env = await sim.createEnv(TINY);
    const during = await sim.stats();
    expect(during.openHandles).toBe(before.openHandles + 1);
    await env.close();
    const after = await sim.stats();
    expect(after.openHandles).toBe(before.openHandles);
  });

  it("refuses requests after shutdown", async () => {
    const local = new SimProcess();
    await local.stats();
    await local.shutdown();
    await expect(local.stats()).rejects.toThrow(/shut down/);
  });
});
