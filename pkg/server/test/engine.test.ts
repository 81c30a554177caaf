/**
 * Conformance against the real consumer: the Python engine drives a full
 * progressive generation through this adapter over the wire. Skipped when the
 * engine is not installed alongside (CI for the adapter alone).
 */
import assert from "node:assert/strict";
import { spawn, spawnSync } from "node:child_process";
import { existsSync } from "node:fs";
import { mkdtemp, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import path from "node:path";
import { test } from "node:test";

import { SyntheticBackbone } from "../src/backbone.js";
import { AdapterServer } from "../src/server.js";
import { BackendSession } from "../src/session.js";

function engineAvailable(): boolean {
  const probe = spawnSync("python3", ["-c", "import hirex"], { timeout: 30000 });
  return probe.status === 0;
}

test("engine-driven generation completes without protocol errors", { timeout: 120000 }, async (t) => {
  if (!engineAvailable()) {
    t.skip("python engine not installed");
    return;
  }
  const session = new BackendSession(new SyntheticBackbone({ seed: 3 }));
  assert.ok(session.codecSelfTest() <= 1 / 127.5);
  const server = new AdapterServer(session);
  const address = await server.listen("127.0.0.1", 0);
  const outDir = await mkdtemp(path.join(tmpdir(), "adapter-drive-"));
  try {
    // async spawn: the adapter serves from this process, so the event loop
    // must stay free while the engine runs
    const run = await new Promise<{ status: number | null; stderr: string }>((resolve) => {
      const child = spawn(
        "python3",
        [
          "-m", "hirex.cli", "generate",
          "--prompt-tokens", "1,2,3",
          "--scales", "1,2",
          "--steps", "4",
          "--seed", "11",
          "--backend", "remote",
          "--endpoint", `127.0.0.1:${address.port}`,
          "--out-dir", outDir,
        ],
        { timeout: 90000 },
      );
      let stderr = "";
      child.stderr.on("data", (chunk) => (stderr += chunk));
      child.on("close", (status) => resolve({ status, stderr }));
    });
    assert.equal(run.status, 0, run.stderr);
    assert.ok(existsSync(path.join(outDir, "output.ppm")));
    assert.ok(existsSync(path.join(outDir, "manifest.txt")));
    // the engine derived patch prompts from our averaged attention capture
    assert.ok(existsSync(path.join(outDir, "stage2x", "prompts.txt")));
  } finally {
    await rm(outDir, { recursive: true, force: true });
    await server.close();
  }
});
