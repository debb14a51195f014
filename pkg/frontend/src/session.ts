/**
 * Session driver: a DOM-free state machine over the service API.
 *
 * The driver never computes localization errors or picks queries; the
 * service is the single source of truth. It only walks the rounds:
 * fetch the query, hand audio URLs to whoever plays them, post the
 * reported direction, repeat until the service says complete. A driver
 * can also be constructed from an existing session id, in which case it
 * resumes at whatever round the service reports (this is what a page
 * reload does).
 */

import {
  QueryInfo,
  ServiceClient,
  SessionState,
  TargetPlanEntry,
} from './api.js';

export interface EtaPoint {
  round: number;
  eta: (number | null)[];
}

export class SessionDriver {
  private constructor(
    private readonly client: ServiceClient,
    public readonly sessionId: string,
    public readonly totalRounds: number,
    private state: SessionState,
  ) {}

  static async start(
    client: ServiceClient,
    targets: TargetPlanEntry[],
    roundsPerTarget: number,
    options: { poolSize?: number; seed?: number; idempotencyKey?: string } = {},
  ): Promise<SessionDriver> {
    const desc = await client.createSession({
      targets,
      rounds_per_target: roundsPerTarget,
      pool_size: options.poolSize,
      seed: options.seed,
      idempotency_key: options.idempotencyKey,
    });
    const state = await client.getState(desc.session_id);
    return new SessionDriver(client, desc.session_id, desc.total_rounds, state);
  }

  /** Rebuild from a stored session id; used after a page reload. */
  static async resume(
    client: ServiceClient,
    sessionId: string,
  ): Promise<SessionDriver> {
    const state = await client.getState(sessionId);
    return new SessionDriver(client, sessionId, state.total_rounds, state);
  }

  get round(): number {
    return this.state.round;
  }

  get complete(): boolean {
    return this.state.status === 'complete';
  }

  get snapshot(): SessionState {
    return this.state;
  }

  async currentQuery(): Promise<QueryInfo> {
    if (this.complete) throw new Error('session is complete');
    return this.client.getQuery(this.sessionId);
  }

  /** Post the reported direction for the current round and refresh state. */
  async report(azimuth: number, elevation: number): Promise<void> {
    await this.client.postResponse(
      this.sessionId,
      this.state.round,
      azimuth,
      elevation,
    );
    this.state = await this.client.getState(this.sessionId);
  }

  /**
   * Running-minimum error trace per round, straight from the service's
   * round records. The summary view plots one line per target.
   */
  etaTrace(): EtaPoint[] {
    return this.state.rounds.map((rec) => ({
      round: rec.t,
      eta: rec.eta.map((e) => e),
    }));
  }
}

/**
 * Per-target eta series for the summary view; each series is a running
 * minimum, so rendering it nonincreasing is a service invariant the view
 * can assert cheaply.
 */
export function etaSeries(trace: EtaPoint[], targetCount: number): number[][] {
  const series: number[][] = [];
  for (let u = 0; u < targetCount; u++) {
    series.push(trace.map((p) => p.eta[u] ?? NaN));
  }
  return series;
}

export function isNonincreasing(values: number[]): boolean {
  for (let i = 1; i < values.length; i++) {
    if (values[i] > values[i - 1] + 1e-12) return false;
  }
  return true;
}
