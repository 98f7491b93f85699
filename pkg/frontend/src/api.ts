/** Typed client for the sentinel /v1 HTTP API. The UI never derives verdicts
 *  or scores itself; every number shown comes from these endpoints. */

export const GRAPH_WIRE_VERSION = "g1";

export interface WireNode {
  id: string;
  kind: "plan" | "reasoning" | "action";
  label: string;
  seqs: number[];
  layer: string | null;
  deviations: string[];
}

export interface WireEdge {
  from: string;
  to: string;
  kind: "refines" | "causes" | "informs";
}

export interface GraphWire {
  version: string;
  session: string;
  nodes: WireNode[];
  edges: WireEdge[];
  topo: string[];
}

export interface DeviationEvidence {
  matched_text: string;
  file_path?: string;
  command?: string;
  diff_hunk?: string;
}

export interface DeviationWire {
  deviation_id: string;
  node: string;
  rule: string;
  category: string;
  severity: "info" | "warn" | "block";
  evidence: DeviationEvidence;
  explanation: string;
}

export interface DeviationsResponse {
  version: string;
  session: string;
  deviations: DeviationWire[];
}

export interface CdiWire {
  session: string;
  coverage: number;
  reconstruction: number;
  deliberation: number;
  cdi: number;
  cit_threshold: number;
  verdict: "ok" | "alert";
}

export interface QuizQuestionWire {
  question_id: string;
  kind: string;
  node_a: string;
  node_b: string;
  truth: boolean;
}

export interface QuizWire {
  session: string;
  seed: number;
  questions: QuizQuestionWire[];
}

export interface SessionSummary {
  session_id: string;
  agent_label: string;
  started_at: string;
  events: number;
  last_seq: number;
}

export interface ReviewPost {
  reviewer: string;
  node_ref: number;
  action: "viewed" | "acknowledged" | "flagged" | "quiz_answer";
  dwell_ms?: number;
  quiz?: { question_id: string; correct: boolean };
  client_nonce?: string;
}

export class VersionMismatchError extends Error {
  constructor(public got: string) {
    super(`graph wire version ${got} is not supported (expected ${GRAPH_WIRE_VERSION})`);
  }
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private async getJson<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    if (!res.ok) throw new ApiError(res.status, `${path}: HTTP ${res.status}`);
    return (await res.json()) as T;
  }

  async sessions(): Promise<SessionSummary[]> {
    const body = await this.getJson<{ sessions: SessionSummary[] }>("/v1/sessions");
    return body.sessions;
  }

  async graph(session: string): Promise<GraphWire> {
    const g = await this.getJson<GraphWire>(`/v1/sessions/${session}/graph`);
    if (g.version !== GRAPH_WIRE_VERSION) throw new VersionMismatchError(g.version);
    return g;
  }

  async deviations(session: string): Promise<DeviationWire[]> {
    const body = await this.getJson<DeviationsResponse>(`/v1/sessions/${session}/deviations`);
    return body.deviations;
  }

  async cdi(session: string, seed: number): Promise<CdiWire> {
    return this.getJson<CdiWire>(`/v1/sessions/${session}/cdi?seed=${seed}`);
  }

  async quiz(session: string, seed: number): Promise<QuizWire> {
    return this.getJson<QuizWire>(`/v1/sessions/${session}/quiz?seed=${seed}`);
  }

  async postReview(session: string, body: ReviewPost): Promise<{ seq: number; deduplicated: boolean }> {
    const res = await this.fetchFn(`${this.baseUrl}/v1/sessions/${session}/reviews`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw new ApiError(res.status, `post review: HTTP ${res.status}`);
    return (await res.json()) as { seq: number; deduplicated: boolean };
  }
}
