// Typed client for the triage service. Every piece of case state lives
// server-side behind /v1/; this file is the only place the UI talks to it.

export type CaseStatus = 'ingested' | 'ranked';
export type Decision = 'benign' | 'illegal';

export interface EventSummary {
  total_count: number;
  top_type: string | null;
  top_source: string | null;
  first_event: string | null;
  last_event: string | null;
}

export interface Prediction {
  rank: number;
  source_id: string;
  inode: number | null;
  path: string;
  hash: string;
  score: number;
  predicted: number;
  events: EventSummary | null;
}

export interface CaseInfo {
  case_id: string;
  status: CaseStatus;
  version: number;
  created_at: string;
  counts: Record<string, number>;
}

export interface PredictionsPage {
  case_id: string;
  version: number;
  count: number;
  predictions: Prediction[];
}

export interface LabelResult {
  case_id: string;
  hash: string;
  decision: Decision;
  result: 'inserted' | 'replaced';
}

/** Service error payloads carry a machine code plus a human message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

async function asError(response: Response): Promise<ApiError> {
  let code = 'unknown';
  let message = `request failed with status ${response.status}`;
  try {
    const body = (await response.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body, keep the fallback message
  }
  return new ApiError(response.status, code, message);
}

export class TriageApi {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`);
    if (!response.ok) throw await asError(response);
    return (await response.json()) as T;
  }

  private async post<T>(path: string, body?: unknown): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method: 'POST',
      headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) throw await asError(response);
    return (await response.json()) as T;
  }

  getCase(caseId: string): Promise<CaseInfo> {
    return this.get(`/v1/cases/${encodeURIComponent(caseId)}`);
  }

  getPredictions(caseId: string, topN?: number): Promise<PredictionsPage> {
    const query = topN === undefined ? '' : `?top_n=${topN}`;
    return this.get(`/v1/cases/${encodeURIComponent(caseId)}/predictions${query}`);
  }

  submitLabel(
    caseId: string,
    hash: string,
    decision: Decision,
    investigator = '',
  ): Promise<LabelResult> {
    return this.post(`/v1/cases/${encodeURIComponent(caseId)}/labels`, {
      hash,
      decision,
      investigator,
    });
  }

  retrain(caseId: string): Promise<CaseInfo> {
    return this.post(`/v1/cases/${encodeURIComponent(caseId)}/retrain`);
  }

  getReport(caseId: string): Promise<{ case_id: string; version: number; report: unknown }> {
    return this.get(`/v1/cases/${encodeURIComponent(caseId)}/report`);
  }
}
