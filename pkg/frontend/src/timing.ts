// Paint-to-click stopwatch. The clock is injectable for deterministic tests.

export type Clock = () => number;

export class Stopwatch {
  private startedAt: number | null = null;

  constructor(private readonly now: Clock = () => performance.now()) {}

  start(): void {
    this.startedAt = this.now();
  }

  get running(): boolean {
    return this.startedAt !== null;
  }

  /** Stop and return whole milliseconds (at least 1: the server rejects 0). */
  stop(): number {
    if (this.startedAt === null) {
      throw new Error("stopwatch was never started");
    }
    const elapsed = Math.max(1, Math.round(this.now() - this.startedAt));
    this.startedAt = null;
    return elapsed;
  }
}
