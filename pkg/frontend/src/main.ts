/** Application shell: loads a trial, renders, and wires submissions.
 *
 * The trial id comes from the `?trial=` query parameter; submissions reuse a
 * staged idempotency key so a retry after a network failure can never record
 * the same cohort twice.
 */

import { ApiError, ConductClient, newIdempotencyKey } from "./api.js";
import type { OutcomeObservation, TrialStatePayload } from "./types.js";
import { renderApp, renderWhatIfResult } from "./views.js";

const client = new ConductClient("");

interface StagedSubmission {
  key: string;
  observations: OutcomeObservation[];
}

let staged: StagedSubmission | null = null;

function showError(message: string): void {
  const slot = document.querySelector(".form-error");
  if (slot) slot.textContent = message;
}

async function refresh(trialId: string): Promise<void> {
  const state = await client.getState(trialId);
  render(trialId, state);
}

function render(trialId: string, state: TrialStatePayload): void {
  const app = renderApp(state, {
    onSubmit: (observations) => submit(trialId, observations),
    onExplore: (hypothetical) => explore(trialId, state, hypothetical),
  });
  document.body.replaceChildren(app);
}

async function submit(
  trialId: string,
  observations: OutcomeObservation[],
): Promise<void> {
  if (!observations.length) return;
  // a fresh logical submission gets a fresh key; a retry keeps the old one
  if (!staged || JSON.stringify(staged.observations) !== JSON.stringify(observations)) {
    staged = { key: newIdempotencyKey(), observations };
  }
  try {
    await client.postOutcomes(trialId, observations, staged.key);
    staged = null;
    await refresh(trialId);
  } catch (error) {
    if (error instanceof ApiError) {
      showError(`${error.detail} — resubmit to retry safely`);
    } else {
      showError("network failure — resubmit to retry safely");
    }
  }
}

async function explore(
  trialId: string,
  state: TrialStatePayload,
  hypothetical: OutcomeObservation[],
): Promise<void> {
  try {
    const result = await client.whatIf(trialId, hypothetical);
    const slot = document.querySelector(".whatif-results");
    if (slot) {
      const label = hypothetical.some((h) => h.dlt)
        ? "If the open cycles show DLTs"
        : "If the open cycles stay clean";
      slot.replaceChildren(renderWhatIfResult(state, label, result));
    }
  } catch (error) {
    if (error instanceof ApiError) showError(error.detail);
  }
}

export async function start(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const trialId = params.get("trial");
  if (!trialId) {
    document.body.textContent = "Add ?trial=<id> to the URL to open a trial.";
    return;
  }
  try {
    await refresh(trialId);
  } catch (error) {
    document.body.textContent =
      error instanceof ApiError ? `Cannot load trial: ${error.detail}` : "Cannot reach service.";
  }
}

if (typeof window !== "undefined" && !("__DOSEFILL_TEST__" in globalThis)) {
  void start();
}
