import type { LabelServiceClient } from "./api.js";
import type { Answer, CreateSessionOptions, Query, SessionStatus } from "./types.js";
import { PAIR_ANSWERS, TRIPLET_ANSWERS } from "./types.js";

export interface ControllerState {
  status: SessionStatus | null;
  current: Query | null;
  submitting: boolean;
  done: boolean;
  error: string | null;
}

const KEY_BINDINGS: Record<string, Answer> = {
  y: "yes",
  n: "no",
  d: "dnk",
  m: "ml",
  c: "cl",
};

/**
 * Session flow driven entirely by service responses: progress, the current
 * query, and the done flag are always refetched rather than inferred, so a
 * page refresh (or a second tab) reconstructs the exact same state.
 */
export class SessionController {
  state: ControllerState = {
    status: null,
    current: null,
    submitting: false,
    done: false,
    error: null,
  };

  private listeners: Array<(state: ControllerState) => void> = [];

  constructor(private readonly client: LabelServiceClient) {}

  subscribe(listener: (state: ControllerState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ControllerState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  get sessionId(): string | null {
    return this.state.status?.id ?? null;
  }

  async start(opts: CreateSessionOptions): Promise<void> {
    const status = await this.client.createSession(opts);
    this.update({ status, error: null });
    await this.advance();
  }

  /** Rehydrate from the service after a refresh; nothing is kept locally. */
  async resume(sessionId: string): Promise<void> {
    const status = await this.client.status(sessionId);
    this.update({ status, error: null });
    await this.advance();
  }

  private async advance(): Promise<void> {
    const id = this.sessionId;
    if (!id) return;
    const nxt = await this.client.next(id);
    this.update({ current: nxt.query ?? null, done: nxt.done });
  }

  answerForKey(key: string): Answer | null {
    const answer = KEY_BINDINGS[key.toLowerCase()];
    if (!answer || !this.state.status) return null;
    const allowed: readonly string[] =
      this.state.status.mode === "triplet" ? TRIPLET_ANSWERS : PAIR_ANSWERS;
    return allowed.includes(answer) ? answer : null;
  }

  /**
   * Submit exactly once per query: re-entrant calls while a submission is in
   * flight are dropped, and a conflict response (the answer already exists
   * server-side) is swallowed before state is refetched.
   */
  async submit(answer: Answer): Promise<void> {
    const { current, submitting } = this.state;
    const id = this.sessionId;
    if (!id || !current || submitting || this.state.done) return;
    this.update({ submitting: true, error: null });
    try {
      await this.client.submitAnswer(id, current.id, answer);
      const status = await this.client.status(id);
      this.update({ status });
      await this.advance();
    } catch (err) {
      this.update({ error: err instanceof Error ? err.message : String(err) });
    } finally {
      this.update({ submitting: false });
    }
  }
}
