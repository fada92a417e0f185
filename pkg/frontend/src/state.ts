import type { SampleView, SessionView } from './types.js';

export interface DecisionTallies {
    pending: number;
    accepted: number;
    rejected: number;
}

export function decisionTallies(session: SessionView): DecisionTallies {
    const tallies: DecisionTallies = { pending: 0, accepted: 0, rejected: 0 };
    for (const sample of session.samples) {
        tallies[sample.state] += 1;
    }
    return tallies;
}

export function isReadOnly(session: SessionView): boolean {
    return session.status === 'exported';
}

/** Export needs at least one accepted sample and an open session. */
export function canExport(session: SessionView): boolean {
    return !isReadOnly(session) && decisionTallies(session).accepted > 0;
}

/** Gallery order: newest batch first, stable by id within a batch. */
export function gallerySamples(session: SessionView): SampleView[] {
    return [...session.samples].sort((a, b) => {
        if (a.batch !== b.batch) {
            return b.batch - a.batch;
        }
        return a.sample_id < b.sample_id ? -1 : a.sample_id > b.sample_id ? 1 : 0;
    });
}

export function promptAtIteration(session: SessionView, iteration: number): string {
    for (const entry of session.prompt_history) {
        if (entry.iteration === iteration) {
            return entry.prompt;
        }
    }
    return '';
}

export function hasRunningJob(session: SessionView): boolean {
    return session.jobs.some((job) => job.status === 'running');
}
