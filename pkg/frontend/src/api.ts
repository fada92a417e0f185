import type {
    DecisionResponse,
    ExportResponse,
    GenerateResponse,
    JobRecordView,
    PromptResponse,
    SessionView,
} from './types.js';

/** Error carrying the HTTP status so callers can branch on 404 vs 409. */
export class ApiError extends Error {
    constructor(public readonly status: number, message: string) {
        super(message);
        this.name = 'ApiError';
    }
}

export interface CreateSessionRequest {
    prompt?: string;
    seed?: number;
    resolution?: number[];
}

/**
 * Typed client for the review service JSON API. Every state transition in
 * the UI goes through exactly one of these methods.
 */
export class ReviewApi {
    constructor(private readonly baseUrl: string = '') {}

    createSession(body: CreateSessionRequest = {}): Promise<SessionView> {
        return this.request('POST', '/sessions', body);
    }

    getSession(sessionId: string): Promise<SessionView> {
        return this.request('GET', `/sessions/${sessionId}`);
    }

    generate(sessionId: string, count: number, seed?: number): Promise<GenerateResponse> {
        const body: Record<string, number> = { count };
        if (seed !== undefined) {
            body.seed = seed;
        }
        return this.request('POST', `/sessions/${sessionId}/generate`, body);
    }

    getJob(jobId: string): Promise<JobRecordView> {
        return this.request('GET', `/jobs/${jobId}`);
    }

    decide(
        sessionId: string,
        sampleId: string,
        decision: 'accepted' | 'rejected',
        note = ''
    ): Promise<DecisionResponse> {
        return this.request(
            'POST',
            `/sessions/${sessionId}/samples/${sampleId}/decision`,
            { decision, note }
        );
    }

    revisePrompt(sessionId: string, prompt: string): Promise<PromptResponse> {
        return this.request('POST', `/sessions/${sessionId}/prompt`, { prompt });
    }

    exportAccepted(sessionId: string): Promise<ExportResponse> {
        return this.request('POST', `/sessions/${sessionId}/export`);
    }

    imageUrl(sessionId: string, sampleId: string): string {
        return `${this.baseUrl}/sessions/${sessionId}/samples/${sampleId}/image`;
    }

    async health(): Promise<boolean> {
        try {
            const res = await fetch(`${this.baseUrl}/health`);
            return res.ok;
        } catch {
            return false;
        }
    }

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const init: RequestInit = { method };
        if (body !== undefined) {
            init.headers = { 'content-type': 'application/json' };
            init.body = JSON.stringify(body);
        }
        const res = await fetch(`${this.baseUrl}${path}`, init);
        if (!res.ok) {
            throw new ApiError(res.status, await extractDetail(res, method, path));
        }
        return (await res.json()) as T;
    }
}

async function extractDetail(res: Response, method: string, path: string): Promise<string> {
    const fallback = `${method} ${path} failed with status ${res.status}`;
    try {
        const data = await res.json();
        if (data && typeof data.detail === 'string') {
            return data.detail;
        }
        if (data && data.detail !== undefined) {
            return JSON.stringify(data.detail);
        }
    } catch {
        // non-JSON error body; fall through
    }
    return fallback;
}
