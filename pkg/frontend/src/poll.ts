import type { ReviewApi } from './api.js';
import type { JobRecordView } from './types.js';

export interface PollOptions {
    intervalMs?: number;
    timeoutMs?: number;
    /** Called after every poll so the UI can show progress. */
    onUpdate?: (job: JobRecordView) => void;
}

function sleep(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Poll a generation job until it reaches a terminal state.
 * Resolves with the job on "done", rejects on "failed" or timeout.
 */
export async function pollJob(
    api: ReviewApi,
    jobId: string,
    options: PollOptions = {}
): Promise<JobRecordView> {
    const intervalMs = options.intervalMs ?? 500;
    const timeoutMs = options.timeoutMs ?? 120_000;
    const deadline = Date.now() + timeoutMs;
    for (;;) {
        const job = await api.getJob(jobId);
        options.onUpdate?.(job);
        if (job.status === 'done') {
            return job;
        }
        if (job.status === 'failed') {
            throw new Error(job.error || `job ${jobId} failed`);
        }
        if (Date.now() >= deadline) {
            throw new Error(`job ${jobId} still running after ${timeoutMs}ms`);
        }
        await sleep(intervalMs);
    }
}
