// Spawns the live platform (validators, storage, agents over HTTP) that
// the wallet flow tests drive, and tears it down afterwards.

import { spawn, ChildProcess } from "node:child_process";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { BASE_PORT, HOLDER_URL } from "./config.js";

let stack: ChildProcess | undefined;

export async function setup(): Promise<void> {
  const here = path.dirname(fileURLToPath(import.meta.url));
  const script = path.join(here, "stack_server.py");
  stack = spawn("python3", [script, String(BASE_PORT)], {
    stdio: ["ignore", "pipe", "inherit"],
  });
  stack.stdout?.on("data", (chunk: Buffer) => {
    if (process.env.WALLET_TEST_VERBOSE) process.stdout.write(chunk);
  });

  const deadline = Date.now() + 90_000;
  for (;;) {
    try {
      const response = await fetch(`${HOLDER_URL}/health`);
      if (response.ok) break;
    } catch {
      // still booting
    }
    if (stack.exitCode !== null) throw new Error(`stack server exited with ${stack.exitCode}`);
    if (Date.now() > deadline) throw new Error("holder agent did not come up in time");
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
}

export async function teardown(): Promise<void> {
  if (!stack) return;
  stack.kill("SIGTERM");
  await new Promise((resolve) => setTimeout(resolve, 1000));
  if (stack.exitCode === null) stack.kill("SIGKILL");
}
