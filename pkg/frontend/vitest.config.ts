import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    testTimeout: 240_000,
    hookTimeout: 120_000,
    // the round-trip suite owns a real service subprocess; keep files serial
    fileParallelism: false,
  },
});
