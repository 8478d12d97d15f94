/** Thin client for the conduct service.
 *
 * Outcome submissions carry an idempotency key that is fixed when the form
 * is staged, so retries (or double-clicks) can never record a cohort twice:
 * the service replays the original response for a repeated key.
 */

import type {
  OutcomeObservation,
  OutcomeStatus,
  TrialStatePayload,
  WhatIfResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export function newIdempotencyKey(): string {
  const bytes = new Uint8Array(12);
  crypto.getRandomValues(bytes);
  return Array.from(bytes, (b) => b.toString(16).padStart(2, "0")).join("");
}

async function parse<T>(response: Response): Promise<T> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    const detail =
      typeof body === "object" && body !== null && "detail" in body
        ? String((body as { detail: unknown }).detail)
        : response.statusText;
    throw new ApiError(response.status, detail);
  }
  return body as T;
}

export class ConductClient {
  private pending = new Map<string, Promise<OutcomeStatus>>();

  constructor(
    private baseUrl: string = "",
    private fetcher: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async post<T>(path: string, payload: unknown): Promise<T> {
    const response = await this.fetcher(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    return parse<T>(response);
  }

  async createTrial(config: unknown, trialId?: string): Promise<{ trial_id: string }> {
    return this.post("/trials", { config, trial_id: trialId });
  }

  async enrollCohort(
    trialId: string,
    doseLevel: number,
    kind: "escalation" | "backfill",
  ): Promise<{ patients: string[] }> {
    return this.post(`/trials/${trialId}/cohorts`, {
      dose_level: doseLevel,
      kind,
    });
  }

  /**
   * Submit cohort outcomes exactly once per idempotency key.  A second call
   * with the same key while the first is in flight returns the same promise;
   * a retry after a network failure reuses the key so the service can
   * deduplicate.
   */
  postOutcomes(
    trialId: string,
    observations: OutcomeObservation[],
    idempotencyKey: string,
  ): Promise<OutcomeStatus> {
    const inFlight = this.pending.get(idempotencyKey);
    if (inFlight) return inFlight;
    const request = this.post<OutcomeStatus>(`/trials/${trialId}/outcomes`, {
      observations,
      idempotency_key: idempotencyKey,
    }).finally(() => {
      this.pending.delete(idempotencyKey);
    });
    this.pending.set(idempotencyKey, request);
    return request;
  }

  async getState(trialId: string): Promise<TrialStatePayload> {
    const response = await this.fetcher(`${this.baseUrl}/trials/${trialId}/state`);
    return parse<TrialStatePayload>(response);
  }

  async whatIf(
    trialId: string,
    hypothetical: OutcomeObservation[],
  ): Promise<WhatIfResponse> {
    return this.post(`/trials/${trialId}/whatif`, { hypothetical });
  }

  async getLog(trialId: string): Promise<string> {
    const response = await this.fetcher(`${this.baseUrl}/trials/${trialId}/log`);
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.text();
  }
}
