import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // The differential suite shells out to the primary CLI once per corpus
    // file, which dominates the runtime.
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
