import { spawn, type ChildProcess } from 'node:child_process';
import { mkdtempSync, readFileSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ReviewApi } from '../src/api.js';
import { pollJob } from '../src/poll.js';
import { renderApp } from '../src/render.js';
import type { SessionView } from '../src/types.js';

// Drives the real review service over HTTP: the python package must be
// installed (pip install -e .). When the service cannot start, every test
// here skips instead of failing, so the unit suite stays usable standalone.
const PYTHON = process.env.INOUT_PYTHON ?? 'python3';
const PORT = 18100 + (process.pid % 1800);
const BASE = `http://127.0.0.1:${PORT}`;

let stateDir = '';
let proc: ChildProcess | null = null;
let procLog = '';
let available = false;

const api = new ReviewApi(BASE);

function startService(dir: string): ChildProcess {
    const child = spawn(
        PYTHON,
        ['-m', 'inout.cli', 'serve', '--state-dir', dir, '--port', String(PORT)],
        { stdio: ['ignore', 'pipe', 'pipe'] }
    );
    child.stdout?.on('data', (chunk) => (procLog += chunk));
    child.stderr?.on('data', (chunk) => (procLog += chunk));
    return child;
}

async function waitForHealth(timeoutMs: number): Promise<boolean> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        if (await api.health()) {
            return true;
        }
        await new Promise((resolve) => setTimeout(resolve, 250));
    }
    return false;
}

async function stopService(child: ChildProcess | null): Promise<void> {
    if (!child || child.exitCode !== null) {
        return;
    }
    const exited = new Promise<void>((resolve) => child.once('exit', () => resolve()));
    child.kill('SIGTERM');
    await Promise.race([exited, new Promise((r) => setTimeout(r, 5000))]);
    if (child.exitCode === null) {
        child.kill('SIGKILL');
        await exited;
    }
}

beforeAll(async () => {
    stateDir = mkdtempSync(join(tmpdir(), 'inout-review-'));
    proc = startService(stateDir);
    available = await waitForHealth(60_000);
    if (!available) {
        console.warn(`review service did not come up, skipping integration tests\n${procLog}`);
        await stopService(proc);
    }
});

afterAll(async () => {
    await stopService(proc);
    if (stateDir) {
        rmSync(stateDir, { recursive: true, force: true });
    }
});

interface ManifestFragment {
    header: { meta: { session_id: string; export_id: string } };
    entries: Array<{ sample_id: string; label: string; source: string; path: string }>;
}

function readFragment(sessionId: string): ManifestFragment {
    const raw = readFileSync(
        join(stateDir, 'exports', sessionId, 'manifest.jsonl'),
        'utf-8'
    );
    const lines = raw.split('\n').filter((ln) => ln.trim());
    return {
        header: JSON.parse(lines[0]),
        entries: lines.slice(1).map((ln) => JSON.parse(ln)),
    };
}

let sessionId = '';
let acceptedFirst: string[] = [];
let acceptedSecond: string[] = [];
let finalView: SessionView | null = null;

describe.sequential('review service round trip', () => {
    it('runs create, generate, review, revise, generate, export', async (ctx) => {
        if (!available) {
            return ctx.skip();
        }

        const created = await api.createSession({
            prompt: 'skt background cracked',
            seed: 3,
        });
        sessionId = created.session_id;
        expect(created.status).toBe('active');
        expect(created.iteration).toBe(1);

        const firstJob = await api.generate(sessionId, 8);
        await pollJob(api, firstJob.job_id, { intervalMs: 200 });

        let view = await api.getSession(sessionId);
        expect(view.samples).toHaveLength(8);
        expect(view.samples.every((s) => s.state === 'pending')).toBe(true);
        expect(view.samples.every((s) => s.iteration === 1)).toBe(true);

        const firstIds = view.samples.map((s) => s.sample_id).sort();
        acceptedFirst = firstIds.slice(0, 5);
        for (const id of acceptedFirst) {
            await api.decide(sessionId, id, 'accepted');
        }
        for (const id of firstIds.slice(5)) {
            await api.decide(sessionId, id, 'rejected');
        }

        const revision = await api.revisePrompt(sessionId, 'skt background scratched');
        expect(revision.iteration).toBe(2);

        const secondJob = await api.generate(sessionId, 4);
        await pollJob(api, secondJob.job_id, { intervalMs: 200 });

        view = await api.getSession(sessionId);
        expect(view.samples).toHaveLength(12);
        const secondBatch = view.samples
            .filter((s) => s.batch === 1)
            .map((s) => s.sample_id)
            .sort();
        expect(secondBatch).toHaveLength(4);
        expect(
            view.samples.filter((s) => s.batch === 1).every((s) => s.iteration === 2)
        ).toBe(true);

        acceptedSecond = secondBatch.slice(0, 2);
        for (const id of acceptedSecond) {
            await api.decide(sessionId, id, 'accepted');
        }

        // The gallery the browser would show at this point: tallies and
        // iteration badges come straight from the server view.
        const galleryHtml = renderApp(
            { session: await api.getSession(sessionId), error: '', generating: false },
            (sid, sample) => api.imageUrl(sid, sample)
        );
        expect(galleryHtml).toContain('7 accepted');
        expect(galleryHtml).toContain('3 rejected');
        expect(galleryHtml).toContain('iter 2');

        const exported = await api.exportAccepted(sessionId);
        const expected = [...acceptedFirst, ...acceptedSecond].sort();
        expect([...exported.accepted_ids].sort()).toEqual(expected);

        const fragment = readFragment(sessionId);
        expect(fragment.header.meta.session_id).toBe(sessionId);
        expect(fragment.entries.map((e) => e.sample_id).sort()).toEqual(expected);
        expect(fragment.entries.every((e) => e.label === 'positive')).toBe(true);
        expect(fragment.entries.every((e) => e.source === 'diffusion')).toBe(true);

        const again = await api.exportAccepted(sessionId);
        expect(again.already_exported).toBe(true);
        expect(again.export_id).toBe(exported.export_id);

        finalView = await api.getSession(sessionId);
        expect(finalView.status).toBe('exported');
        const readOnlyHtml = renderApp(
            { session: finalView, error: '', generating: false },
            (sid, sample) => api.imageUrl(sid, sample)
        );
        expect(readOnlyHtml).toContain('read-only');
        expect(readOnlyHtml).not.toContain('data-action="export"');
    });

    it('serves sample images as PNG', async (ctx) => {
        if (!available || !finalView) {
            return ctx.skip();
        }
        const res = await fetch(api.imageUrl(sessionId, finalView.samples[0].sample_id));
        expect(res.status).toBe(200);
        expect(res.headers.get('content-type')).toBe('image/png');
        const bytes = new Uint8Array(await res.arrayBuffer());
        expect(Array.from(bytes.slice(0, 4))).toEqual([0x89, 0x50, 0x4e, 0x47]);
    });

    it('replays the event log into the identical session after a restart', async (ctx) => {
        if (!available || !finalView) {
            return ctx.skip();
        }
        await stopService(proc);
        proc = startService(stateDir);
        expect(await waitForHealth(60_000)).toBe(true);

        const replayed = await api.getSession(sessionId);
        expect(replayed).toEqual(finalView);
    });
});
