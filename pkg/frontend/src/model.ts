/** View-side state: node visuals, dwell measurement, and quiz progress.
 *  Deviation marking mirrors the deviations endpoint exactly; nothing here
 *  re-derives a verdict. */

import type { DeviationWire, GraphWire, QuizQuestionWire, QuizWire, WireNode } from "./api.js";

export type NodeVisual = "normal" | "deviation" | "acknowledged";

export class GraphViewModel {
  readonly byNode = new Map<string, DeviationWire[]>();
  private acknowledged = new Set<string>();

  constructor(readonly graph: GraphWire, deviations: DeviationWire[]) {
    for (const d of deviations) {
      const list = this.byNode.get(d.node) ?? [];
      list.push(d);
      this.byNode.set(d.node, list);
    }
  }

  node(id: string): WireNode | undefined {
    return this.graph.nodes.find((n) => n.id === id);
  }

  deviationsFor(id: string): DeviationWire[] {
    return this.byNode.get(id) ?? [];
  }

  /** Nodes a reviewer can acknowledge: exactly those the server flagged. */
  isFlagged(id: string): boolean {
    return this.byNode.has(id);
  }

  flaggedNodeIds(): string[] {
    return this.graph.nodes.filter((n) => this.byNode.has(n.id)).map((n) => n.id);
  }

  /** Server-confirmed acknowledgment; never set optimistically. */
  markAcknowledged(id: string): void {
    this.acknowledged.add(id);
  }

  carryAcknowledgmentsFrom(previous: GraphViewModel): void {
    for (const id of previous.acknowledged) this.acknowledged.add(id);
  }

  visualState(id: string): NodeVisual {
    if (this.acknowledged.has(id)) return "acknowledged";
    if (this.byNode.has(id)) return "deviation";
    return "normal";
  }
}

/** Wall-clock dwell on the detail pane; monotone in pane-open time. */
export class DwellTracker {
  private openedAt: number | null = null;
  private nodeId: string | null = null;

  constructor(private now: () => number = () => Date.now()) {}

  open(nodeId: string): void {
    this.nodeId = nodeId;
    this.openedAt = this.now();
  }

  /** Returns the viewed node and its dwell, or null if nothing was open. */
  close(): { nodeId: string; dwellMs: number } | null {
    if (this.nodeId === null || this.openedAt === null) return null;
    const dwellMs = Math.max(0, Math.round(this.now() - this.openedAt));
    const out = { nodeId: this.nodeId, dwellMs };
    this.nodeId = null;
    this.openedAt = null;
    return out;
  }

  get openNode(): string | null {
    return this.nodeId;
  }
}

export interface GradedAnswer {
  question: QuizQuestionWire;
  saidPrecedes: boolean;
  correct: boolean;
}

/** One quiz run: grade answers against the served truth, each question once. */
export class QuizSession {
  private answers = new Map<string, GradedAnswer>();

  constructor(readonly quiz: QuizWire) {}

  get questions(): QuizQuestionWire[] {
    return this.quiz.questions;
  }

  isAnswered(questionId: string): boolean {
    return this.answers.has(questionId);
  }

  answer(questionId: string, saidPrecedes: boolean): GradedAnswer {
    const q = this.quiz.questions.find((x) => x.question_id === questionId);
    if (!q) throw new Error(`unknown question ${questionId}`);
    if (this.answers.has(questionId)) throw new Error(`question ${questionId} already answered`);
    const graded = { question: q, saidPrecedes, correct: saidPrecedes === q.truth };
    this.answers.set(questionId, graded);
    return graded;
  }

  get complete(): boolean {
    return this.answers.size === this.quiz.questions.length;
  }

  get graded(): GradedAnswer[] {
    return [...this.answers.values()];
  }
}

/** Stable per-(node, action) nonces so retries and double clicks dedup server-side. */
export class NonceBook {
  private nonces = new Map<string, string>();

  constructor(private generate: () => string = defaultNonce) {}

  for(nodeId: string, action: string): string {
    const key = `${nodeId}:${action}`;
    let nonce = this.nonces.get(key);
    if (!nonce) {
      nonce = this.generate();
      this.nonces.set(key, nonce);
    }
    return nonce;
  }
}

function defaultNonce(): string {
  if (typeof crypto !== "undefined" && "randomUUID" in crypto) return crypto.randomUUID();
  return `n-${Date.now()}-${Math.floor(Math.random() * 1e9)}`;
}
