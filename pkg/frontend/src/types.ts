/** Types mirroring the conduct service's JSON payloads, field for field. */

export interface DesignConfigPayload {
  doses: number[];
  prior: { c1: number; c2: number; v1: number; v2: number };
  rules: Record<string, number>;
  cohort_size: number;
  followup_cycles: number;
  cycle_weeks: number;
  backfill_policy: string;
  backfill_cohorts_per_dose: number;
  restrict_recommendation_to_experimented: boolean;
  sampler: Record<string, number>;
}

export interface PatientRow {
  id: string;
  dose_level: number;
  kind: string;
  cycles_observed: number;
  dlt_cycle: number | null;
}

export interface CohortRow {
  dose_level: number;
  kind: string;
  patients: string[];
}

export interface RuleStatus {
  recommendation_level: number;
  in_startup: boolean;
  stopped: boolean;
  stop_reason: string;
  recommends_dose: boolean;
  excluded_levels: number[];
}

export interface Summaries {
  mean_tox: number[];
  tail_above_tau1: number[];
  tail_below_tau1: number[];
  /** posterior quantile bands keyed "0.025" | "0.5" | "0.975" */
  quantiles: Record<string, number[]>;
}

export interface TrialStatePayload {
  trial_id: string;
  config: DesignConfigPayload;
  doses: number[];
  target: number;
  n_enrolled: number;
  patients: PatientRow[];
  cohorts: CohortRow[];
  backfill_ledger: CohortRow[];
  summaries: Summaries;
  rule_status: RuleStatus;
  cv_mtd: number | null;
  events: Record<string, unknown>[];
}

export interface OutcomeObservation {
  patient: string;
  cycle: number;
  dlt: boolean;
}

export interface OutcomeStatus {
  recommendation_level: number;
  in_startup: boolean;
  stopped: boolean;
  stop_reason: string;
  recommends_dose: boolean;
  excluded_levels: number[];
  mean_tox: number[];
  cv_mtd: number | null;
  n_enrolled: number;
}

export interface WhatIfResponse {
  recommendation_level: number;
  stopped: boolean;
  stop_reason: string;
  recommends_dose: boolean;
  mean_tox: number[];
  cv_mtd: number | null;
  excluded_levels: number[];
}
