import { defineConfig } from "vitest/config";

export default defineConfig({
  build: {
    outDir: "dist",
  },
  server: {
    // the session service runs separately; proxy API + WS calls to it
    proxy: {
      "/sessions": {
        target: "http://127.0.0.1:8000",
        ws: true,
      },
    },
  },
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
