import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    globalSetup: ["./tests/global-setup.ts"],
    testTimeout: 30_000,
    hookTimeout: 120_000,
    // the fixture services are shared; single-threaded keeps runs stable
    pool: "forks",
    poolOptions: { forks: { singleFork: true } },
  },
});
