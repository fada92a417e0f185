export type SampleState = 'pending' | 'accepted' | 'rejected';
export type SessionStatus = 'active' | 'exported';
export type JobStatus = 'running' | 'done' | 'failed';

export interface PromptEntry {
    iteration: number;
    prompt: string;
}

export interface SampleView {
    sample_id: string;
    state: SampleState;
    batch: number;
    iteration: number;
    note: string;
}

export interface SessionJobView {
    job_id: string;
    batch: number;
    status: JobStatus;
    count: number;
    sample_ids: string[];
    error: string;
}

export interface ExportInfo {
    export_id: string;
    accepted_ids: string[];
    path: string;
}

export interface SessionView {
    session_id: string;
    prompt: string;
    iteration: number;
    prompt_history: PromptEntry[];
    seed: number;
    resolution: number[];
    status: SessionStatus;
    samples: SampleView[];
    accepted_ids: string[];
    export: Partial<ExportInfo>;
    jobs: SessionJobView[];
}

export interface GenerateResponse {
    job_id: string;
    session_id: string;
    status: JobStatus;
}

export interface JobRecordView {
    job_id: string;
    session_id: string;
    status: JobStatus;
    sample_ids: string[];
    error: string;
}

export interface DecisionResponse {
    sample_id: string;
    state: SampleState;
    note: string;
}

export interface PromptResponse {
    session_id: string;
    prompt: string;
    iteration: number;
}

export interface ExportResponse extends ExportInfo {
    session_id: string;
    already_exported?: boolean;
}
