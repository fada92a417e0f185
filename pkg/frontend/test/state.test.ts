import { describe, expect, it } from 'vitest';

import {
    canExport,
    decisionTallies,
    gallerySamples,
    hasRunningJob,
    isReadOnly,
    promptAtIteration,
} from '../src/state.js';
import { sample, session } from './fixtures.js';

describe('decisionTallies', () => {
    it('counts samples by decision state', () => {
        const view = session({
            samples: [
                sample({ sample_id: '00-000', state: 'accepted' }),
                sample({ sample_id: '00-001', state: 'accepted' }),
                sample({ sample_id: '00-002', state: 'rejected' }),
                sample({ sample_id: '00-003' }),
            ],
        });
        expect(decisionTallies(view)).toEqual({ pending: 1, accepted: 2, rejected: 1 });
    });
});

describe('canExport', () => {
    it('requires at least one accepted sample', () => {
        const empty = session({ samples: [sample()] });
        expect(canExport(empty)).toBe(false);

        const ready = session({ samples: [sample({ state: 'accepted' })] });
        expect(canExport(ready)).toBe(true);
    });

    it('is false once the session is exported', () => {
        const done = session({
            status: 'exported',
            samples: [sample({ state: 'accepted' })],
        });
        expect(isReadOnly(done)).toBe(true);
        expect(canExport(done)).toBe(false);
    });
});

describe('gallerySamples', () => {
    it('orders newest batch first, ids ascending within a batch', () => {
        const view = session({
            samples: [
                sample({ sample_id: '00-001', batch: 0 }),
                sample({ sample_id: '01-000', batch: 1 }),
                sample({ sample_id: '00-000', batch: 0 }),
                sample({ sample_id: '01-001', batch: 1 }),
            ],
        });
        expect(gallerySamples(view).map((s) => s.sample_id)).toEqual([
            '01-000',
            '01-001',
            '00-000',
            '00-001',
        ]);
    });
});

describe('promptAtIteration', () => {
    it('finds the prompt for a sample iteration badge', () => {
        const view = session({
            iteration: 2,
            prompt: 'skt background scratched',
            prompt_history: [
                { iteration: 1, prompt: 'skt background cracked' },
                { iteration: 2, prompt: 'skt background scratched' },
            ],
        });
        expect(promptAtIteration(view, 1)).toBe('skt background cracked');
        expect(promptAtIteration(view, 2)).toBe('skt background scratched');
        expect(promptAtIteration(view, 9)).toBe('');
    });
});

describe('hasRunningJob', () => {
    it('reflects the job list', () => {
        const idle = session({
            jobs: [
                {
                    job_id: 'job-a',
                    batch: 0,
                    status: 'done',
                    count: 8,
                    sample_ids: [],
                    error: '',
                },
            ],
        });
        expect(hasRunningJob(idle)).toBe(false);

        const busy = session({
            jobs: [
                {
                    job_id: 'job-b',
                    batch: 1,
                    status: 'running',
                    count: 4,
                    sample_ids: [],
                    error: '',
                },
            ],
        });
        expect(hasRunningJob(busy)).toBe(true);
    });
});
