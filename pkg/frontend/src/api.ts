// Typed client for the conductor HTTP API. The UI renders only what these
// endpoints return; it never recomputes plans client-side.

export type Phase =
  | "Routing"
  | "Planning"
  | "AwaitingClarification"
  | "PlanValidation"
  | "Provisioning"
  | "DeferredGeneration"
  | "ExecutionApproval"
  | "Executing"
  | "Completed"
  | "Failed"
  | "Rejected";

export interface Message {
  role: "user" | "system";
  text: string;
}

export interface StagingActionView {
  unit: string;
  kind: "full_download" | "region_extract";
  est_bytes: number;
  full_bytes: number;
}

export interface PlanView {
  description: string;
  advisory_parallelism: Record<string, number>;
  actions: StagingActionView[];
  total_est_bytes: number;
  total_full_bytes: number;
  savings_fraction: number;
}

export interface SummaryView {
  task_count: number;
  est_peak_storage_bytes: number;
  projected_runtime_s: number;
}

export interface AnomalyView {
  kind: string;
  task_id: string;
  evidence: string;
  raised_at: number;
}

export interface RunView {
  total_tasks: number;
  completed: number;
  failed: number;
  in_flight: number;
  anomalies: AnomalyView[];
  wall_clock_s: number;
}

export interface IntentView {
  analysis_type: string;
  populations: string[];
  chromosomes: string[] | null;
  regions: { name: string; chromosome: string; start: number; end: number }[] | null;
  focus: string;
}

export interface SessionView {
  id: string;
  phase: Phase;
  query: string;
  messages: Message[];
  intent: IntentView | null;
  plan: PlanView | null;
  summary: SummaryView | null;
  run: RunView | null;
  terminal_cause: string | null;
  event_count: number;
}

export interface JournalEvent {
  seq: number;
  at: string;
  kind: string;
  data: Record<string, unknown>;
}

export interface TimingRow {
  name: string;
  seconds: number;
  fraction: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail: unknown = null;
    try {
      detail = (await response.json()).detail;
    } catch {
      detail = await response.text();
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ConductorClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? "{}" : JSON.stringify(body),
    }).then((r) => asJson<T>(r));
  }

  private get<T>(path: string): Promise<T> {
    return this.fetchImpl(`${this.baseUrl}${path}`).then((r) => asJson<T>(r));
  }

  openSession(query: string): Promise<SessionView> {
    return this.post("/sessions", { query });
  }

  getSession(id: string): Promise<SessionView> {
    return this.get(`/sessions/${id}`);
  }

  sendMessage(id: string, text: string): Promise<SessionView> {
    return this.post(`/sessions/${id}/message`, { text });
  }

  approvePlan(id: string): Promise<SessionView> {
    return this.post(`/sessions/${id}/approve-plan`);
  }

  reject(id: string): Promise<SessionView> {
    return this.post(`/sessions/${id}/reject`);
  }

  approveExecution(id: string): Promise<SessionView> {
    return this.post(`/sessions/${id}/approve-execution`);
  }

  getEvents(id: string, after: number, waitSeconds = 0): Promise<{ events: JournalEvent[]; last_seq: number }> {
    return this.get(`/sessions/${id}/events?after=${after}&wait=${waitSeconds}`);
  }

  getTiming(id: string): Promise<{ rows: TimingRow[] }> {
    return this.get(`/sessions/${id}/timing`);
  }

  workflowUrl(id: string): string {
    return `${this.baseUrl}/sessions/${id}/workflow`;
  }
}

/**
 * Polling event subscription with an idempotent cursor: events are delivered
 * exactly once by sequence number, and a dropped connection resumes from the
 * cursor without duplicating rendered events.
 */
export class EventStream {
  private cursor = 0;
  private seen = new Set<number>();
  private stopped = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly client: ConductorClient,
    private readonly sessionId: string,
    private readonly onEvent: (event: JournalEvent) => void,
    private readonly intervalMs = 400,
  ) {}

  deliver(events: JournalEvent[]): void {
    for (const event of events) {
      if (this.seen.has(event.seq)) continue;
      this.seen.add(event.seq);
      this.cursor = Math.max(this.cursor, event.seq);
      this.onEvent(event);
    }
  }

  async pollOnce(): Promise<void> {
    const batch = await this.client.getEvents(this.sessionId, this.cursor, 0);
    this.deliver(batch.events);
  }

  start(): void {
    const loop = async () => {
      if (this.stopped) return;
      try {
        await this.pollOnce();
      } catch {
        // transient network failure: resubscribe on next tick from the cursor
      }
      this.timer = setTimeout(loop, this.intervalMs);
    };
    void loop();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
  }
}
