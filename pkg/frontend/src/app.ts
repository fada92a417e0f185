import { ApiError, ReviewApi } from './api.js';
import { pollJob } from './poll.js';
import { renderApp, type AppModel } from './render.js';

/**
 * Single-session review controller. All state lives on the server; this
 * class only holds the last fetched SessionView and re-renders after every
 * call, so a page refresh reconstructs the same view from GET /sessions/{id}.
 */
export class App {
    private model: AppModel = { session: null, error: '', generating: false };

    constructor(
        private readonly root: HTMLElement,
        private readonly api: ReviewApi
    ) {}

    mount(): void {
        this.root.addEventListener('click', (event) => {
            const target = (event.target as HTMLElement).closest('[data-action]');
            if (target instanceof HTMLElement && target.dataset.action) {
                void this.dispatch(target.dataset.action, target);
            }
        });
        this.root.addEventListener('keydown', (event) => {
            const card = (event.target as HTMLElement).closest('[data-sample-id]');
            if (!(card instanceof HTMLElement) || !card.dataset.sampleId) {
                return;
            }
            if (event.key === 'a') {
                void this.decide(card.dataset.sampleId, 'accepted');
            } else if (event.key === 'r') {
                void this.decide(card.dataset.sampleId, 'rejected');
            }
        });
        this.render();
    }

    /** Resume an existing session, e.g. after a page reload. */
    async load(sessionId: string): Promise<void> {
        await this.guard(async () => {
            this.model.session = await this.api.getSession(sessionId);
        });
    }

    private render(): void {
        this.root.innerHTML = renderApp(this.model, (sid, sample) =>
            this.api.imageUrl(sid, sample)
        );
    }

    private async dispatch(action: string, target: HTMLElement): Promise<void> {
        switch (action) {
            case 'create-session':
                await this.createSession();
                break;
            case 'generate':
                await this.generate();
                break;
            case 'accept':
            case 'reject':
                if (target.dataset.sampleId) {
                    await this.decide(
                        target.dataset.sampleId,
                        action === 'accept' ? 'accepted' : 'rejected'
                    );
                }
                break;
            case 'revise-prompt':
                await this.revisePrompt();
                break;
            case 'export':
                await this.exportAccepted();
                break;
            case 'dismiss-error':
                this.model.error = '';
                this.render();
                break;
            default:
                break;
        }
    }

    private inputValue(id: string): string {
        const el = this.root.querySelector(`#${id}`);
        return el instanceof HTMLInputElement ? el.value : '';
    }

    private async createSession(): Promise<void> {
        const prompt = this.inputValue('create-prompt').trim();
        const seed = Number(this.inputValue('create-seed') || '0');
        await this.guard(async () => {
            this.model.session = await this.api.createSession({ prompt, seed });
        });
    }

    private async generate(): Promise<void> {
        const session = this.model.session;
        if (!session) {
            return;
        }
        const count = Number(this.inputValue('generate-count') || '8');
        await this.guard(async () => {
            const job = await this.api.generate(session.session_id, count);
            this.model.generating = true;
            this.render();
            try {
                await pollJob(this.api, job.job_id);
            } finally {
                this.model.generating = false;
                this.model.session = await this.api.getSession(session.session_id);
            }
        });
    }

    private async decide(sampleId: string, decision: 'accepted' | 'rejected'): Promise<void> {
        const session = this.model.session;
        if (!session) {
            return;
        }
        await this.guard(async () => {
            try {
                await this.api.decide(session.session_id, sampleId, decision);
            } catch (err) {
                // A conflict means the card was stale; the refresh below
                // re-syncs it to the server's decision.
                if (!(err instanceof ApiError && err.status === 409)) {
                    throw err;
                }
            }
            this.model.session = await this.api.getSession(session.session_id);
        });
    }

    private async revisePrompt(): Promise<void> {
        const session = this.model.session;
        if (!session) {
            return;
        }
        const prompt = this.inputValue('prompt-input').trim();
        await this.guard(async () => {
            await this.api.revisePrompt(session.session_id, prompt);
            this.model.session = await this.api.getSession(session.session_id);
        });
    }

    private async exportAccepted(): Promise<void> {
        const session = this.model.session;
        if (!session) {
            return;
        }
        await this.guard(async () => {
            await this.api.exportAccepted(session.session_id);
            this.model.session = await this.api.getSession(session.session_id);
        });
    }

    private async guard(fn: () => Promise<void>): Promise<void> {
        try {
            await fn();
            this.model.error = '';
        } catch (err) {
            this.model.error = err instanceof Error ? err.message : String(err);
        }
        this.render();
    }
}
