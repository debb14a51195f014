/**
 * Typed client for the /v1 session service. One in-flight request per
 * client: calls are serialized through an internal promise chain so the
 * browser never races a response post against a query fetch.
 */

export interface TargetPlanEntry {
  azimuth: number;
  elevation: number;
}

export interface SessionDescriptor {
  session_id: string;
  target_plan: TargetPlanEntry[];
  rounds_per_target: number;
  total_rounds: number;
  status: 'awaiting_response' | 'complete';
}

export interface QueryInfo {
  round: number;
  target_index: number;
  round_in_block: number;
  candidate_id: number;
  wav: string;
  alternates: string;
}

export interface RoundRecord {
  t: number;
  target_index: number;
  candidate_id: number;
  mp_digest: string;
  v: number[];
  ssle: number[];
  eta: number[];
}

export interface BestRound {
  t: number;
  ssle: number;
  v: number[];
  candidate_id: number;
}

export interface SessionState extends SessionDescriptor {
  round: number;
  eta: (number | null)[];
  rounds: RoundRecord[];
  best_per_target: (BestRound | null)[];
}

export interface ResponseAck {
  status: 'next_round' | 'complete';
  round: number;
  eta: number[];
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

export class ServiceClient {
  private queue: Promise<unknown> = Promise.resolve();

  constructor(private readonly baseUrl: string) {}

  private enqueue<T>(task: () => Promise<T>): Promise<T> {
    const next = this.queue.then(task, task);
    this.queue = next.catch(() => undefined);
    return next;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.baseUrl + path, init);
    if (!res.ok) {
      let detail = res.statusText;
      try {
        const body = (await res.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return (await res.json()) as T;
  }

  createSession(plan: {
    targets: TargetPlanEntry[];
    rounds_per_target?: number;
    pool_size?: number;
    seed?: number;
    idempotency_key?: string;
  }): Promise<SessionDescriptor> {
    return this.enqueue(() =>
      this.request('/v1/sessions', {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify(plan),
      }),
    );
  }

  getQuery(sessionId: string): Promise<QueryInfo> {
    return this.enqueue(() =>
      this.request(`/v1/sessions/${sessionId}/query`),
    );
  }

  getState(sessionId: string): Promise<SessionState> {
    return this.enqueue(() =>
      this.request(`/v1/sessions/${sessionId}/state`),
    );
  }

  postResponse(
    sessionId: string,
    round: number,
    azimuth: number,
    elevation: number,
  ): Promise<ResponseAck> {
    return this.enqueue(() =>
      this.request(`/v1/sessions/${sessionId}/response`, {
        method: 'POST',
        headers: { 'content-type': 'application/json' },
        body: JSON.stringify({ round, azimuth, elevation }),
      }),
    );
  }

  async fetchAudio(path: string): Promise<ArrayBuffer> {
    return this.enqueue(async () => {
      const res = await fetch(this.baseUrl + path);
      if (!res.ok) throw new ApiError(res.status, res.statusText);
      return res.arrayBuffer();
    });
  }
}
