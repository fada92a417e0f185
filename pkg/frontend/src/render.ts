import {
    canExport,
    decisionTallies,
    gallerySamples,
    hasRunningJob,
    isReadOnly,
    promptAtIteration,
} from './state.js';
import type { SampleView, SessionView } from './types.js';

export interface AppModel {
    session: SessionView | null;
    error: string;
    generating: boolean;
}

export function escapeHtml(value: unknown): string {
    return String(value)
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;')
        .replace(/'/g, '&#039;');
}

export function renderErrorBanner(error: string): string {
    if (!error) {
        return '';
    }
    return `
        <div class="error-banner" role="alert">
            <span>${escapeHtml(error)}</span>
            <button data-action="dismiss-error">dismiss</button>
        </div>
    `;
}

function renderCreateForm(): string {
    return `
        <div class="panel create-panel">
            <h2>New review session</h2>
            <input id="create-prompt" type="text" value="skt background cracked" />
            <input id="create-seed" type="number" value="0" title="generation seed" />
            <button data-action="create-session">Start session</button>
        </div>
    `;
}

function renderPromptPanel(session: SessionView, generating: boolean): string {
    const readOnly = isReadOnly(session);
    const disabled = readOnly || generating ? 'disabled' : '';
    return `
        <div class="panel prompt-panel">
            <div class="session-line">
                <span class="session-id">${escapeHtml(session.session_id)}</span>
                <span class="iteration-badge">iteration ${session.iteration}</span>
                ${readOnly ? '<span class="badge exported">exported &middot; read-only</span>' : ''}
            </div>
            <input id="prompt-input" type="text" value="${escapeHtml(session.prompt)}" ${disabled} />
            <button data-action="revise-prompt" ${disabled}>Revise prompt</button>
            <input id="generate-count" type="number" value="8" min="0" ${disabled} />
            <button data-action="generate" ${disabled}>Generate</button>
            ${generating ? '<span class="progress">generating&hellip;</span>' : ''}
        </div>
    `;
}

export function renderHistory(session: SessionView): string {
    const items = session.prompt_history
        .map((entry) => {
            const current = entry.iteration === session.iteration ? ' current' : '';
            return `
                <li class="history-entry${current}">
                    <span class="iteration-badge">iter ${entry.iteration}</span>
                    <span class="history-prompt">${escapeHtml(entry.prompt)}</span>
                </li>
            `;
        })
        .join('');
    return `
        <div class="panel history-panel">
            <h3>Prompt history</h3>
            <ol>${items}</ol>
        </div>
    `;
}

function renderSampleCard(
    sample: SampleView,
    session: SessionView,
    imageUrl: (sessionId: string, sampleId: string) => string
): string {
    const src = imageUrl(session.session_id, sample.sample_id);
    const prompt = promptAtIteration(session, sample.iteration);
    const actions =
        sample.state === 'pending' && !isReadOnly(session)
            ? `
                <div class="card-actions">
                    <button data-action="accept" data-sample-id="${escapeHtml(sample.sample_id)}">Accept</button>
                    <button data-action="reject" data-sample-id="${escapeHtml(sample.sample_id)}">Reject</button>
                </div>
            `
            : '';
    const note = sample.note
        ? `<div class="card-note">${escapeHtml(sample.note)}</div>`
        : '';
    return `
        <div class="sample-card state-${sample.state}" tabindex="0"
             data-sample-id="${escapeHtml(sample.sample_id)}">
            <img src="${escapeHtml(src)}" alt="sample ${escapeHtml(sample.sample_id)}"
                 title="${escapeHtml(prompt)}" />
            <div class="card-meta">
                <span class="iteration-badge">iter ${sample.iteration}</span>
                <span class="state-badge ${sample.state}">${sample.state}</span>
            </div>
            ${note}
            ${actions}
        </div>
    `;
}

export function renderGallery(
    session: SessionView,
    imageUrl: (sessionId: string, sampleId: string) => string
): string {
    const samples = gallerySamples(session);
    if (samples.length === 0) {
        const hint = hasRunningJob(session)
            ? 'Generation in progress.'
            : 'No samples yet. Generate a batch to start reviewing.';
        return `
            <div class="panel gallery-panel">
                <div class="empty-state">${hint}</div>
            </div>
        `;
    }
    const tallies = decisionTallies(session);
    const cards = samples.map((s) => renderSampleCard(s, session, imageUrl)).join('');
    return `
        <div class="panel gallery-panel">
            <div class="tallies">
                <span class="tally pending">${tallies.pending} pending</span>
                <span class="tally accepted">${tallies.accepted} accepted</span>
                <span class="tally rejected">${tallies.rejected} rejected</span>
            </div>
            <div class="gallery">${cards}</div>
        </div>
    `;
}

export function renderExportPanel(session: SessionView): string {
    if (isReadOnly(session)) {
        const exported = session.export;
        const ids = exported.accepted_ids ?? [];
        return `
            <div class="panel export-panel">
                <span class="badge exported">exported &middot; read-only</span>
                <div>export ${escapeHtml(exported.export_id ?? '')}:
                    ${ids.length} accepted sample(s) at
                    <code>${escapeHtml(exported.path ?? '')}</code></div>
            </div>
        `;
    }
    const ready = canExport(session);
    const hint = ready
        ? ''
        : '<span class="export-hint">accept at least one sample to export</span>';
    return `
        <div class="panel export-panel">
            <button data-action="export" ${ready ? '' : 'disabled'}>Export accepted</button>
            ${hint}
        </div>
    `;
}

export function renderApp(
    model: AppModel,
    imageUrl: (sessionId: string, sampleId: string) => string
): string {
    const body = model.session
        ? `
            ${renderPromptPanel(model.session, model.generating)}
            ${renderHistory(model.session)}
            ${renderGallery(model.session, imageUrl)}
            ${renderExportPanel(model.session)}
        `
        : renderCreateForm();
    return `
        ${renderErrorBanner(model.error)}
        ${body}
    `;
}
