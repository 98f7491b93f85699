/** The review client: fetches a session's graph, deviations, quiz, and CDI
 *  from the service, renders the DAG left-to-right, and posts every reviewer
 *  gesture back as a review event. All displayed numbers are served values. */

import { ApiClient, VersionMismatchError } from "./api.js";
import type { CdiWire, DeviationWire, GraphWire, WireNode } from "./api.js";
import { canvasSize, layoutGraph, NODE_H, NODE_W } from "./layout.js";
import { DwellTracker, GraphViewModel, NonceBook, QuizSession } from "./model.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface AppOptions {
  session: string;
  reviewer: string;
  quizSeed: number;
  pollMs: number;
  now?: () => number;
}

export class App {
  readonly api: ApiClient;
  readonly opts: AppOptions;
  private root: HTMLElement;
  private doc: Document;
  private view: GraphViewModel | null = null;
  private cdi: CdiWire | null = null;
  private dwell: DwellTracker;
  private nonces = new NonceBook();
  private quizSession: QuizSession | null = null;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private ackInFlight = new Set<string>();
  private ackFailed = new Set<string>();

  constructor(root: HTMLElement, api: ApiClient, opts: AppOptions) {
    this.root = root;
    this.doc = root.ownerDocument;
    this.api = api;
    this.opts = opts;
    this.dwell = new DwellTracker(opts.now);
    this.root.innerHTML = "";
    this.root.appendChild(this.section("banner"));
    this.root.appendChild(this.section("summary"));
    const main = this.el("div", "main");
    main.appendChild(this.section("canvas"));
    const side = this.el("div", "side");
    side.appendChild(this.section("detail"));
    side.appendChild(this.section("quiz"));
    main.appendChild(side);
    this.root.appendChild(main);
  }

  private el<K extends keyof HTMLElementTagNameMap>(tag: K, cls?: string): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag);
    if (cls) node.className = cls;
    return node;
  }

  private section(name: string): HTMLDivElement {
    const div = this.el("div", name);
    div.dataset.section = name;
    return div;
  }

  private find(name: string): HTMLDivElement {
    return this.root.querySelector(`[data-section="${name}"]`) as HTMLDivElement;
  }

  async start(): Promise<void> {
    await this.refresh();
    if (this.opts.pollMs > 0) {
      this.pollTimer = setInterval(() => void this.refresh(), this.opts.pollMs);
    }
  }

  stop(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
  }

  async refresh(): Promise<void> {
    let graph: GraphWire;
    let deviations: DeviationWire[];
    try {
      [graph, deviations] = await Promise.all([
        this.api.graph(this.opts.session),
        this.api.deviations(this.opts.session),
      ]);
      this.cdi = await this.api.cdi(this.opts.session, this.opts.quizSeed);
    } catch (err) {
      if (err instanceof VersionMismatchError) {
        this.renderBanner(`Unsupported graph schema: ${err.got}. Update this client.`);
        return;
      }
      this.renderBanner(`Service unreachable: ${String(err)}`);
      return;
    }
    this.renderBanner(null);
    const view = new GraphViewModel(graph, deviations);
    if (this.view) view.carryAcknowledgmentsFrom(this.view);
    this.view = view;
    if (this.quizSession === null) {
      const quiz = await this.api.quiz(this.opts.session, this.opts.quizSeed);
      this.quizSession = new QuizSession(quiz);
    }
    this.renderSummary();
    this.renderCanvas();
    this.renderQuiz();
  }

  // -- rendering ------------------------------------------------------------

  private renderBanner(message: string | null): void {
    const banner = this.find("banner");
    banner.innerHTML = "";
    if (message !== null) {
      banner.classList.add("blocking");
      const p = this.el("p");
      p.textContent = message;
      banner.appendChild(p);
    } else {
      banner.classList.remove("blocking");
    }
  }

  private renderSummary(): void {
    const box = this.find("summary");
    box.innerHTML = "";
    const title = this.el("h1");
    title.textContent = `session ${this.opts.session}`;
    box.appendChild(title);
    if (this.cdi) {
      const c = this.cdi;
      const dl = this.el("div", "cdi-breakdown");
      dl.dataset.verdict = c.verdict;
      const entries: [string, string][] = [
        ["coverage", c.coverage.toFixed(3)],
        ["reconstruction", c.reconstruction.toFixed(3)],
        ["deliberation", c.deliberation.toFixed(3)],
        ["cdi", c.cdi.toFixed(3)],
        ["threshold", c.cit_threshold.toFixed(3)],
        ["verdict", c.verdict],
      ];
      for (const [label, value] of entries) {
        const item = this.el("span", `cdi-${label}`);
        item.textContent = `${label} ${value}`;
        dl.appendChild(item);
      }
      box.appendChild(dl);
    }
  }

  private renderCanvas(): void {
    const canvas = this.find("canvas");
    canvas.innerHTML = "";
    const view = this.view;
    if (!view || view.graph.nodes.length === 0) {
      const empty = this.el("p", "empty-state");
      empty.textContent = "This session has no steps yet.";
      canvas.appendChild(empty);
      return;
    }

    const positions = layoutGraph(view.graph);
    const { width, height } = canvasSize(positions);
    const surface = this.el("div", "surface");
    surface.style.width = `${width}px`;
    surface.style.height = `${height}px`;

    const svg = this.doc.createElementNS(SVG_NS, "svg");
    svg.setAttribute("width", String(width));
    svg.setAttribute("height", String(height));
    svg.classList.add("edges");
    for (const e of view.graph.edges) {
      const from = positions.get(e.from);
      const to = positions.get(e.to);
      if (!from || !to) continue;
      const line = this.doc.createElementNS(SVG_NS, "line");
      line.setAttribute("x1", String(from.x + NODE_W));
      line.setAttribute("y1", String(from.y + NODE_H / 2));
      line.setAttribute("x2", String(to.x));
      line.setAttribute("y2", String(to.y + NODE_H / 2));
      line.setAttribute("class", `edge edge-${e.kind}`);
      svg.appendChild(line);
    }
    surface.appendChild(svg);

    for (const node of view.graph.nodes) {
      const pos = positions.get(node.id);
      if (!pos) continue;
      const card = this.el("div", `node kind-${node.kind} state-${view.visualState(node.id)}`);
      card.dataset.nodeId = node.id;
      card.style.left = `${pos.x}px`;
      card.style.top = `${pos.y}px`;
      const head = this.el("div", "node-head");
      head.textContent = `${node.id} · ${node.kind}${node.layer ? " · " + node.layer : ""}`;
      const label = this.el("div", "node-label");
      label.textContent = node.label;
      card.appendChild(head);
      card.appendChild(label);
      if (view.isFlagged(node.id)) {
        const flag = this.el("div", "node-flag");
        flag.textContent = `${view.deviationsFor(node.id).length} deviation(s)`;
        card.appendChild(flag);
      }
      card.addEventListener("click", () => void this.openDetail(node.id));
      surface.appendChild(card);
    }
    canvas.appendChild(surface);
  }

  /** Opening a node's pane starts dwell timing; closing posts one viewed event. */
  async openDetail(nodeId: string): Promise<void> {
    if (this.dwell.openNode !== null) await this.closeDetail();
    const view = this.view;
    const node = view?.node(nodeId);
    if (!view || !node) return;
    this.dwell.open(nodeId);

    const pane = this.find("detail");
    pane.innerHTML = "";
    pane.dataset.openNode = nodeId;

    const head = this.el("h2");
    head.textContent = `${node.id} · ${node.kind}`;
    pane.appendChild(head);
    const label = this.el("p", "detail-label");
    label.textContent = node.label;
    pane.appendChild(label);
    const meta = this.el("p", "detail-meta");
    meta.textContent = `events ${node.seqs.join(", ")}` + (node.layer ? ` · layer ${node.layer}` : "");
    pane.appendChild(meta);

    for (const d of view.deviationsFor(nodeId)) {
      const item = this.el("div", `deviation severity-${d.severity}`);
      const title = this.el("strong");
      title.textContent = `${d.rule} (${d.category}, ${d.severity})`;
      item.appendChild(title);
      const why = this.el("p", "deviation-rationale");
      why.textContent = d.explanation;
      item.appendChild(why);
      const ev = this.el("pre", "deviation-evidence");
      ev.textContent = [
        d.evidence.matched_text,
        d.evidence.file_path ? `file: ${d.evidence.file_path}` : "",
        d.evidence.command ? `command: ${d.evidence.command}` : "",
        d.evidence.diff_hunk ?? "",
      ]
        .filter(Boolean)
        .join("\n");
      item.appendChild(ev);
      pane.appendChild(item);
    }

    const controls = this.el("div", "detail-controls");
    const ack = this.el("button", "ack-button");
    ack.textContent = view.visualState(nodeId) === "acknowledged" ? "acknowledged" : "acknowledge";
    ack.disabled = !view.isFlagged(nodeId) || view.visualState(nodeId) === "acknowledged";
    ack.addEventListener("click", () => void this.acknowledge(nodeId));
    controls.appendChild(ack);
    if (this.ackFailed.has(nodeId)) {
      const note = this.el("span", "ack-retry-note");
      note.textContent = "acknowledge failed — press again to retry";
      controls.appendChild(note);
    }
    const close = this.el("button", "close-button");
    close.textContent = "close";
    close.addEventListener("click", () => void this.closeDetail());
    controls.appendChild(close);
    pane.appendChild(controls);
  }

  async closeDetail(): Promise<void> {
    const done = this.dwell.close();
    const pane = this.find("detail");
    pane.innerHTML = "";
    delete pane.dataset.openNode;
    if (!done || !this.view) return;
    const node = this.view.node(done.nodeId);
    if (!node) return;
    await this.api.postReview(this.opts.session, {
      reviewer: this.opts.reviewer,
      node_ref: primarySeq(node),
      action: "viewed",
      dwell_ms: done.dwellMs,
    });
  }

  /** Acknowledge with a stable nonce; state flips only on server confirmation. */
  async acknowledge(nodeId: string): Promise<void> {
    const view = this.view;
    const node = view?.node(nodeId);
    if (!view || !node || !view.isFlagged(nodeId)) return;
    if (this.ackInFlight.has(nodeId)) return;
    this.ackInFlight.add(nodeId);
    try {
      await this.api.postReview(this.opts.session, {
        reviewer: this.opts.reviewer,
        node_ref: primarySeq(node),
        action: "acknowledged",
        client_nonce: this.nonces.for(nodeId, "acknowledged"),
      });
      view.markAcknowledged(nodeId);
      this.ackFailed.delete(nodeId);
    } catch {
      this.ackFailed.add(nodeId);
    } finally {
      this.ackInFlight.delete(nodeId);
    }
    this.renderCanvas();
    if (this.dwell.openNode === nodeId) {
      const reopened = this.dwell.openNode; // keep the pane; re-render controls only
      this.dwell.open(reopened);
      await this.renderDetailControlsOnly(nodeId);
    }
  }

  private async renderDetailControlsOnly(nodeId: string): Promise<void> {
    const pane = this.find("detail");
    if (pane.dataset.openNode !== nodeId) return;
    const button = pane.querySelector(".ack-button") as HTMLButtonElement | null;
    if (button && this.view) {
      const acked = this.view.visualState(nodeId) === "acknowledged";
      button.textContent = acked ? "acknowledged" : "acknowledge";
      button.disabled = acked;
    }
    const note = pane.querySelector(".ack-retry-note");
    if (note && !this.ackFailed.has(nodeId)) note.remove();
    if (!note && this.ackFailed.has(nodeId)) {
      const controls = pane.querySelector(".detail-controls");
      if (controls) {
        const span = this.el("span", "ack-retry-note");
        span.textContent = "acknowledge failed — press again to retry";
        controls.appendChild(span);
      }
    }
  }

  private renderQuiz(): void {
    const box = this.find("quiz");
    box.innerHTML = "";
    const quiz = this.quizSession;
    if (!quiz || quiz.questions.length === 0) return; // short chain: no quiz required
    const head = this.el("h2");
    head.textContent = "Reconstruction quiz";
    box.appendChild(head);
    for (const q of quiz.questions) {
      const row = this.el("div", "quiz-question");
      row.dataset.questionId = q.question_id;
      const text = this.el("span");
      text.textContent = `Does ${q.node_a} come before ${q.node_b} on the principal chain?`;
      row.appendChild(text);
      if (quiz.isAnswered(q.question_id)) {
        const done = this.el("span", "quiz-answered");
        const graded = quiz.graded.find((g) => g.question.question_id === q.question_id);
        done.textContent = graded?.correct ? "✓" : "✗";
        row.appendChild(done);
      } else {
        for (const saysYes of [true, false]) {
          const btn = this.el("button", saysYes ? "quiz-yes" : "quiz-no");
          btn.textContent = saysYes ? "yes" : "no";
          btn.addEventListener("click", () => void this.answerQuiz(q.question_id, saysYes));
          row.appendChild(btn);
        }
      }
      box.appendChild(row);
    }
    if (quiz.complete) {
      const done = this.el("p", "quiz-complete");
      const correct = quiz.graded.filter((g) => g.correct).length;
      done.textContent = `Quiz complete: ${correct}/${quiz.questions.length} as graded by the served answer key.`;
      box.appendChild(done);
    }
  }

  /** Each answer posts one quiz_answer event; on completion the CDI is refetched. */
  async answerQuiz(questionId: string, saysYes: boolean): Promise<void> {
    const quiz = this.quizSession;
    if (!quiz || quiz.isAnswered(questionId) || !this.view) return;
    const graded = quiz.answer(questionId, saysYes);
    const anchor = this.view.graph.nodes.find((n) => n.id === graded.question.node_a);
    await this.api.postReview(this.opts.session, {
      reviewer: this.opts.reviewer,
      node_ref: anchor ? primarySeq(anchor) : 1,
      action: "quiz_answer",
      quiz: { question_id: questionId, correct: graded.correct },
      client_nonce: this.nonces.for(questionId, "quiz_answer"),
    });
    if (quiz.complete) {
      this.cdi = await this.api.cdi(this.opts.session, this.opts.quizSeed);
      this.renderSummary();
    }
    this.renderQuiz();
  }
}

function primarySeq(node: WireNode): number {
  return node.seqs[0] ?? 0;
}
