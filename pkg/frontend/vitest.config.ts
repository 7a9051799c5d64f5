import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["./tests/globalSetup.ts"],
    testTimeout: 60_000,
    hookTimeout: 120_000,
    // The live tests all drive one shared agent stack; keep them in one
    // worker so flows do not interleave.
    fileParallelism: false,
  },
});
