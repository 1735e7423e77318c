// Forward-only quiz session state machine.
//
// The server's cursor is the single source of truth: the runner only ever
// shows the item the server says is next, so no client path can reach an
// already-answered item. Answers are timed from image paint to the first
// input; later inputs for the same item are ignored.

import { ApiError, Label, Report, VttApi } from "./api.js";
import { Clock, Stopwatch } from "./timing.js";

export type RunnerState =
  | { kind: "loading" }
  | {
      kind: "showing";
      index: number;
      imageUrl: string;
      answered: number;
      total: number;
    }
  | { kind: "error"; message: string }
  | { kind: "finished"; report: Report };

export type StateListener = (state: RunnerState) => void;

export class QuizRunner {
  private state: RunnerState = { kind: "loading" };
  private readonly listeners = new Set<StateListener>();
  private readonly stopwatch: Stopwatch;
  private submitting = false;

  constructor(
    private readonly api: VttApi,
    private readonly sessionId: string,
    clock?: Clock,
  ) {
    this.stopwatch = new Stopwatch(clock);
  }

  getState(): RunnerState {
    return this.state;
  }

  subscribe(listener: StateListener): () => void {
    this.listeners.add(listener);
    listener(this.state);
    return () => this.listeners.delete(listener);
  }

  private setState(state: RunnerState): void {
    this.state = state;
    for (const listener of this.listeners) listener(state);
  }

  /** Fetch the item at the server cursor, or the report once done. */
  async advance(): Promise<void> {
    this.setState({ kind: "loading" });
    try {
      const next = await this.api.nextItem(this.sessionId);
      if (next.done) {
        const report = await this.api.report(this.sessionId);
        this.setState({ kind: "finished", report });
        return;
      }
      this.setState({
        kind: "showing",
        index: next.index as number,
        imageUrl: next.image_url as string,
        answered: next.answered,
        total: next.total,
      });
    } catch (err) {
      this.setState({ kind: "error", message: describe(err) });
    }
  }

  /** Arm the response timer; called when the item image finishes painting. */
  imageLoaded(): void {
    if (this.state.kind === "showing") {
      this.stopwatch.start();
    }
  }

  /**
   * Submit the label for the current item. The first input wins: calls made
   * before the image painted, or while a submission is in flight, are
   * ignored. Resolves to true when the answer was accepted.
   */
  async answer(label: Label): Promise<boolean> {
    if (this.state.kind !== "showing" || this.submitting || !this.stopwatch.running) {
      return false;
    }
    const index = this.state.index;
    const elapsed = this.stopwatch.stop();
    this.submitting = true;
    try {
      await this.api.submitAnswer(this.sessionId, index, label, elapsed);
      await this.advance();
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // another tab or a retry already answered this index; resync
        await this.advance();
        return false;
      }
      this.setState({ kind: "error", message: describe(err) });
      return false;
    } finally {
      this.submitting = false;
    }
  }

  /** Recover from a network failure; the server cursor is untouched. */
  async retry(): Promise<void> {
    if (this.state.kind === "error") {
      await this.advance();
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? err.message : `server error ${err.status}: ${err.message}`;
  }
  return String(err);
}

export async function resumeOrStart(
  api: VttApi,
  storage: Pick<Storage, "getItem" | "setItem" | "removeItem">,
  quizId: string,
  graderId: string,
): Promise<string> {
  // refreshing the page resumes the same session at the server cursor
  const key = `skullkit-session:${quizId}:${graderId}`;
  const existing = storage.getItem(key);
  if (existing) {
    try {
      await api.nextItem(existing);
      return existing;
    } catch {
      storage.removeItem(key);
    }
  }
  const session = await api.startSession(quizId, graderId);
  storage.setItem(key, session.session_id);
  return session.session_id;
}
