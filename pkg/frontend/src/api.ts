// Typed client for the advisory service JSON API (/api/v1).
// Raw response text is preserved alongside parsed payloads so views can
// compare or display exactly what the server sent.

export type Recommendation = {
  step: number;
  normalized: number[];
  physical: Record<string, number>;
  mode: string;
  seed?: number;
};

export type SessionView = {
  session_id: string;
  scenario: string;
  checkpoint_id: string;
  mode: string;
  step: number;
  horizon: number;
  status: 'active' | 'complete' | 'aborted';
  recommendations: Recommendation[];
  observations: ObservationPayload[];
};

export type ObservationPayload =
  | { scalar: number[] }
  | { trajectory: { t0: number; dt: number; values: number[] } };

export type ScenarioInfo = {
  scenario: string;
  horizon: number;
  action_bounds: Record<string, [number, number]>;
  observation: { kind: 'scalar' | 'series'; dim: number };
  observation_schema: Record<string, unknown>;
};

export type CheckpointInfo = {
  checkpoint_id: string;
  scenario: string;
  train_meta: Record<string, unknown>;
};

export type SubmitResult = {
  status: 'active' | 'complete';
  recommendation?: Recommendation;
  session?: SessionView;
  estimated_frequency?: number | null;
  second_peak?: number | null;
};

export type WhatIfResult = {
  label: string;
  action_normalized: number[];
  action_physical: Record<string, number>;
  n_requested: number;
  n_effective: number;
  n_failed: number;
  quantiles: Record<string, { q10: number; q50: number; q90: number } | null>;
  samples: Record<string, (number | null)[]>;
  band_trajectories?: Record<string, { t0: number; dt: number; values: number[] }>;
};

export class ApiError extends Error {
  status: number;
  payload: Record<string, unknown>;

  constructor(status: number, payload: Record<string, unknown>) {
    super(String(payload['error'] ?? `HTTP ${status}`));
    this.status = status;
    this.payload = payload;
  }
}

export type RawResponse<T> = { data: T; raw: string };

async function request<T>(
  path: string,
  init?: RequestInit,
): Promise<RawResponse<T>> {
  const res = await fetch(path, init);
  const raw = await res.text();
  let parsed: unknown = {};
  try {
    parsed = raw ? JSON.parse(raw) : {};
  } catch {
    throw new ApiError(res.status, { error: 'response was not JSON' });
  }
  if (!res.ok) {
    throw new ApiError(res.status, parsed as Record<string, unknown>);
  }
  return { data: parsed as T, raw };
}

function post<T>(path: string, body: unknown): Promise<RawResponse<T>> {
  return request<T>(path, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify(body),
  });
}

export const api = {
  async scenarios(): Promise<ScenarioInfo[]> {
    const r = await request<{ scenarios: ScenarioInfo[] }>('/api/v1/scenarios');
    return r.data.scenarios;
  },

  async checkpoints(): Promise<CheckpointInfo[]> {
    const r = await request<{ checkpoints: CheckpointInfo[] }>('/api/v1/checkpoints');
    return r.data.checkpoints;
  },

  async createSession(
    scenario: string,
    checkpointId: string,
    mode: string,
  ): Promise<{ session_id: string; recommendation: Recommendation }> {
    const r = await post<{ session_id: string; recommendation: Recommendation }>(
      '/api/v1/sessions',
      { scenario, checkpoint_id: checkpointId, mode },
    );
    return r.data;
  },

  async listSessions(): Promise<SessionView[]> {
    const r = await request<{ sessions: SessionView[] }>('/api/v1/sessions');
    return r.data.sessions;
  },

  async getSession(id: string): Promise<SessionView> {
    const r = await request<SessionView>(`/api/v1/sessions/${id}`);
    return r.data;
  },

  async submitObservation(
    id: string,
    payload: ObservationPayload & { step?: number },
  ): Promise<SubmitResult> {
    const r = await post<SubmitResult>(`/api/v1/sessions/${id}/observations`, payload);
    return r.data;
  },

  /** Returns both the parsed result and the exact JSON text the server sent. */
  async whatIf(
    id: string,
    action: Record<string, number>,
    nSamples: number,
  ): Promise<RawResponse<WhatIfResult>> {
    return post<WhatIfResult>(`/api/v1/sessions/${id}/whatif`, {
      action,
      n_samples: nSamples,
    });
  },
};
