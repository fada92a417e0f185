import { defineConfig } from 'vitest/config';

export default defineConfig({
    test: {
        environment: 'node',
        include: ['test/**/*.test.ts'],
        hookTimeout: 90_000,
        testTimeout: 120_000,
    },
});
