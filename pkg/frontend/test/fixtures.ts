import type { SampleView, SessionView } from '../src/types.js';

export function sample(overrides: Partial<SampleView> = {}): SampleView {
    return {
        sample_id: '00-000',
        state: 'pending',
        batch: 0,
        iteration: 1,
        note: '',
        ...overrides,
    };
}

export function session(overrides: Partial<SessionView> = {}): SessionView {
    return {
        session_id: 'session-0001',
        prompt: 'skt background cracked',
        iteration: 1,
        prompt_history: [{ iteration: 1, prompt: 'skt background cracked' }],
        seed: 0,
        resolution: [32, 96],
        status: 'active',
        samples: [],
        accepted_ids: [],
        export: {},
        jobs: [],
        ...overrides,
    };
}
