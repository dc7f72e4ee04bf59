import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node", // DOM tests build their own JSDOM instances
    include: ["tests/**/*.test.ts"],
    testTimeout: 120_000, // the e2e suite spawns a real daemon
    hookTimeout: 60_000,
    pool: "forks",
  },
});
