// DOM application: one conductor session per page, rendered from SessionView
// snapshots plus a polled event stream for live run progress.

import {
  ApiError,
  ConductorClient,
  EventStream,
  type JournalEvent,
  type SessionView,
  type TimingRow,
} from "./api.js";
import { controlsFor, isTerminal } from "./gating.js";

function el<T extends HTMLElement>(root: ParentNode, selector: string): T {
  const node = root.querySelector(selector);
  if (!node) throw new Error(`missing element ${selector}`);
  return node as T;
}

function fmtBytes(n: number): string {
  if (n >= 1e9) return `${(n / 1e9).toFixed(2)} GB`;
  if (n >= 1e6) return `${(n / 1e6).toFixed(1)} MB`;
  if (n >= 1e3) return `${(n / 1e3).toFixed(1)} KB`;
  return `${n} B`;
}

export const APP_HTML = `
<header>
  <h1>intent2dag</h1>
  <span id="phase-badge" class="badge" data-phase="">no session</span>
</header>
<section id="query-section">
  <form id="query-form">
    <input id="query-input" type="text" placeholder="Describe the analysis, e.g. Compare EUR and AFR on chromosome 21" />
    <button id="submit-btn" type="submit">Submit</button>
  </form>
</section>
<section id="transcript" class="card"><h2>Conversation</h2><ul id="messages"></ul></section>
<section id="plan-card" class="card hidden">
  <h2>Workflow plan</h2>
  <pre id="plan-description"></pre>
  <table id="staging-table">
    <thead><tr><th>Unit</th><th>Staging</th><th>Transfer</th><th>Full file</th></tr></thead>
    <tbody></tbody>
  </table>
  <p id="plan-savings"></p>
  <p id="plan-advisory"></p>
</section>
<section id="summary-card" class="card hidden">
  <h2>Execution summary</h2>
  <dl>
    <dt>Tasks</dt><dd id="summary-tasks"></dd>
    <dt>Est. peak storage</dt><dd id="summary-storage"></dd>
    <dt>Projected runtime</dt><dd id="summary-runtime"></dd>
  </dl>
</section>
<section id="controls">
  <form id="message-form">
    <input id="message-input" type="text" disabled />
    <button id="message-btn" type="submit" disabled>Send</button>
  </form>
  <div class="buttons">
    <button id="approve-plan-btn" disabled>Approve plan</button>
    <button id="approve-execution-btn" disabled>Approve execution</button>
    <button id="reject-btn" disabled>Reject</button>
  </div>
</section>
<section id="run-card" class="card hidden">
  <h2>Run</h2>
  <p id="run-counts"></p>
  <ul id="anomalies"></ul>
</section>
<section id="result-card" class="card hidden">
  <h2>Result</h2>
  <p id="terminal-note"></p>
  <table id="timing-table"><tbody></tbody></table>
  <p><a id="workflow-link" href="#" download="workflow.json">Download workflow.json</a></p>
</section>
<div id="error-banner" class="hidden">
  <span id="error-text"></span>
  <button id="error-dismiss">dismiss</button>
</div>
`;

export class App {
  readonly client: ConductorClient;
  private root: HTMLElement;
  private view: SessionView | null = null;
  private stream: EventStream | null = null;
  private taskCounts = { completed: 0, failed: 0 };

  constructor(root: HTMLElement, client?: ConductorClient) {
    this.root = root;
    this.client = client ?? new ConductorClient("");
    root.innerHTML = APP_HTML;
    this.wire();
    this.render();
  }

  get session(): SessionView | null {
    return this.view;
  }

  private wire(): void {
    el<HTMLFormElement>(this.root, "#query-form").addEventListener("submit", (e) => {
      e.preventDefault();
      const input = el<HTMLInputElement>(this.root, "#query-input");
      if (input.value.trim()) void this.submitQuery(input.value.trim());
    });
    el<HTMLFormElement>(this.root, "#message-form").addEventListener("submit", (e) => {
      e.preventDefault();
      const input = el<HTMLInputElement>(this.root, "#message-input");
      if (input.value.trim()) void this.sendMessage(input.value.trim());
    });
    el<HTMLButtonElement>(this.root, "#approve-plan-btn").addEventListener("click", () =>
      this.act((id) => this.client.approvePlan(id)),
    );
    el<HTMLButtonElement>(this.root, "#approve-execution-btn").addEventListener("click", () =>
      this.act((id) => this.client.approveExecution(id)),
    );
    el<HTMLButtonElement>(this.root, "#reject-btn").addEventListener("click", () =>
      this.act((id) => this.client.reject(id)),
    );
    el<HTMLButtonElement>(this.root, "#error-dismiss").addEventListener("click", () =>
      this.showError(null),
    );
  }

  async submitQuery(query: string): Promise<void> {
    this.stream?.stop();
    this.taskCounts = { completed: 0, failed: 0 };
    try {
      this.apply(await this.client.openSession(query));
    } catch (error) {
      this.surface(error);
      return;
    }
    if (this.view) {
      this.stream = new EventStream(this.client, this.view.id, (e) => this.onEvent(e));
      this.stream.start();
    }
  }

  async sendMessage(text: string): Promise<void> {
    if (!this.view) return;
    try {
      this.apply(await this.client.sendMessage(this.view.id, text));
      el<HTMLInputElement>(this.root, "#message-input").value = "";
    } catch (error) {
      this.surface(error);
    }
  }

  private async act(call: (id: string) => Promise<SessionView>): Promise<void> {
    if (!this.view) return;
    try {
      this.apply(await call(this.view.id));
    } catch (error) {
      this.surface(error);
      if (error instanceof ApiError && error.status === 409 && this.view) {
        // server disagreed about the phase: re-sync and let gating disable us
        this.apply(await this.client.getSession(this.view.id));
      }
    }
  }

  private onEvent(event: JournalEvent): void {
    if (event.kind === "run_event") {
      const kind = event.data["kind"];
      if (kind === "completed") this.taskCounts.completed += 1;
      if (kind === "failed") this.taskCounts.failed += 1;
      this.renderRunCounts();
    }
    if (event.kind === "phase" || event.kind === "terminal" || event.kind === "run_summary") {
      void this.refresh();
    }
  }

  private async refresh(): Promise<void> {
    if (!this.view) return;
    try {
      this.apply(await this.client.getSession(this.view.id));
    } catch {
      // keep the last snapshot; the poller will retry
    }
  }

  apply(view: SessionView): void {
    this.view = view;
    if (isTerminal(view.phase)) this.stream?.stop();
    this.render();
  }

  private surface(error: unknown): void {
    this.showError(error instanceof Error ? error.message : String(error));
  }

  private showError(message: string | null): void {
    const banner = el<HTMLDivElement>(this.root, "#error-banner");
    banner.classList.toggle("hidden", message === null);
    el<HTMLSpanElement>(this.root, "#error-text").textContent = message ?? "";
  }

  private renderRunCounts(): void {
    const view = this.view;
    const card = el<HTMLElement>(this.root, "#run-card");
    const total = view?.run?.total_tasks ?? view?.summary?.task_count ?? 0;
    card.classList.toggle("hidden", !(view && (view.phase === "Executing" || view.run)));
    el<HTMLParagraphElement>(this.root, "#run-counts").textContent =
      `${this.taskCounts.completed} completed / ${this.taskCounts.failed} failed of ${total} tasks`;
  }

  private async renderTiming(): Promise<void> {
    if (!this.view) return;
    let rows: TimingRow[];
    try {
      rows = (await this.client.getTiming(this.view.id)).rows;
    } catch {
      return;
    }
    const body = el<HTMLTableSectionElement>(this.root, "#timing-table tbody");
    body.innerHTML = "";
    for (const row of rows) {
      const tr = document.createElement("tr");
      tr.innerHTML = `<td>${row.name}</td><td>${row.seconds.toFixed(2)}s</td><td>${(row.fraction * 100).toFixed(1)}%</td>`;
      body.appendChild(tr);
    }
  }

  render(): void {
    const view = this.view;
    const badge = el<HTMLSpanElement>(this.root, "#phase-badge");
    badge.textContent = view ? view.phase : "no session";
    badge.dataset.phase = view?.phase ?? "";

    const messages = el<HTMLUListElement>(this.root, "#messages");
    messages.innerHTML = "";
    for (const message of view?.messages ?? []) {
      const li = document.createElement("li");
      li.className = `msg ${message.role}`;
      li.textContent = message.text;
      messages.appendChild(li);
    }

    const plan = view?.plan ?? null;
    el<HTMLElement>(this.root, "#plan-card").classList.toggle("hidden", plan === null);
    if (plan) {
      el<HTMLPreElement>(this.root, "#plan-description").textContent = plan.description;
      const tbody = el<HTMLTableSectionElement>(this.root, "#staging-table tbody");
      tbody.innerHTML = "";
      for (const action of plan.actions) {
        const tr = document.createElement("tr");
        tr.innerHTML =
          `<td>${action.unit}</td><td>${action.kind.replace("_", " ")}</td>` +
          `<td>${fmtBytes(action.est_bytes)}</td><td>${fmtBytes(action.full_bytes)}</td>`;
        tbody.appendChild(tr);
      }
      el<HTMLParagraphElement>(this.root, "#plan-savings").textContent =
        `Transfer ${fmtBytes(plan.total_est_bytes)} of ${fmtBytes(plan.total_full_bytes)} ` +
        `(${(plan.savings_fraction * 100).toFixed(1)}% saved)`;
      el<HTMLParagraphElement>(this.root, "#plan-advisory").textContent =
        "Advisory parallelism: " +
        Object.entries(plan.advisory_parallelism)
          .map(([unit, j]) => `${unit}=${j}`)
          .join(", ");
    }

    const summary = view?.summary ?? null;
    el<HTMLElement>(this.root, "#summary-card").classList.toggle("hidden", summary === null);
    if (summary) {
      el<HTMLElement>(this.root, "#summary-tasks").textContent = String(summary.task_count);
      el<HTMLElement>(this.root, "#summary-storage").textContent = fmtBytes(
        summary.est_peak_storage_bytes,
      );
      el<HTMLElement>(this.root, "#summary-runtime").textContent =
        `${summary.projected_runtime_s.toFixed(1)} s (simulated)`;
    }

    const controls = controlsFor(view?.phase ?? null);
    el<HTMLButtonElement>(this.root, "#submit-btn").disabled = !controls.submitEnabled;
    const messageInput = el<HTMLInputElement>(this.root, "#message-input");
    messageInput.disabled = !controls.messageEnabled;
    messageInput.placeholder = controls.messagePlaceholder;
    el<HTMLButtonElement>(this.root, "#message-btn").disabled = !controls.messageEnabled;
    el<HTMLButtonElement>(this.root, "#approve-plan-btn").disabled = !controls.approvePlanEnabled;
    el<HTMLButtonElement>(this.root, "#approve-execution-btn").disabled =
      !controls.approveExecutionEnabled;
    el<HTMLButtonElement>(this.root, "#reject-btn").disabled = !controls.rejectEnabled;

    this.renderRunCounts();

    const result = el<HTMLElement>(this.root, "#result-card");
    const terminal = view !== null && isTerminal(view.phase);
    result.classList.toggle("hidden", !terminal);
    if (view && terminal) {
      const note =
        view.phase === "Completed"
          ? `Completed: ${view.run?.completed ?? 0}/${view.run?.total_tasks ?? 0} tasks, ` +
            `${view.run?.failed ?? 0} failed.`
          : `${view.phase}: ${view.terminal_cause ?? ""}`;
      el<HTMLParagraphElement>(this.root, "#terminal-note").textContent = note;
      const link = el<HTMLAnchorElement>(this.root, "#workflow-link");
      link.classList.toggle("hidden", view.phase !== "Completed");
      if (view.phase === "Completed") {
        link.href = this.client.workflowUrl(view.id);
        void this.renderTiming();
      }
    }
  }
}
