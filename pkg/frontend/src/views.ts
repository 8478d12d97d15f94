/** Pure render functions: service state in, DOM out.  No statistics here. */

import { renderCurveSvg } from "./chart.js";
import { num, pct, stopReasonLabel } from "./format.js";
import type {
  OutcomeObservation,
  PatientRow,
  TrialStatePayload,
  WhatIfResponse,
} from "./types.js";

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderStatusPanel(state: TrialStatePayload): HTMLElement {
  const panel = el("section", "panel status-panel");
  const rule = state.rule_status;
  const heading = el("h2", undefined, `Trial ${state.trial_id}`);
  panel.appendChild(heading);

  const rec = el("p", "recommendation");
  if (rule.stopped && !rule.recommends_dose) {
    rec.textContent = "Recommendation: none (safety stop)";
  } else {
    const dose = state.doses[rule.recommendation_level - 1];
    rec.textContent = `Recommendation: level ${rule.recommendation_level} (${dose} MBq)`;
  }
  rec.dataset.level = String(rule.recommendation_level);
  panel.appendChild(rec);

  const status = el("p", "rule-status", stopReasonLabel(rule.stop_reason));
  status.dataset.stopped = String(rule.stopped);
  panel.appendChild(status);

  if (rule.in_startup) {
    panel.appendChild(el("p", "startup-note", "start-up phase: escalating one level at a time"));
  }

  const cv = el("p", "cv-mtd", `CV(MTD): ${state.cv_mtd === null ? "—" : num(state.cv_mtd, 3)}`);
  panel.appendChild(cv);

  const excluded = el(
    "p",
    "excluded",
    rule.excluded_levels.length
      ? `Excluded levels: ${rule.excluded_levels.join(", ")}`
      : "Excluded levels: none",
  );
  panel.appendChild(excluded);

  panel.appendChild(
    el("p", "enrolled", `Enrolled: ${state.n_enrolled} patients`),
  );
  return panel;
}

export function renderCurvePanel(state: TrialStatePayload): HTMLElement {
  const panel = el("section", "panel curve-panel");
  panel.appendChild(el("h3", undefined, "Dose-toxicity posterior"));
  const holder = el("div", "curve");
  holder.innerHTML = renderCurveSvg(state.doses, state.summaries, state.target);
  panel.appendChild(holder);
  const table = el("table", "summary-table");
  const head = el("tr");
  for (const title of ["Level", "Dose (MBq)", "Mean tox", "P(tox > target1)"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  state.doses.forEach((dose, i) => {
    const row = el("tr");
    row.appendChild(el("td", undefined, String(i + 1)));
    row.appendChild(el("td", undefined, String(dose)));
    row.appendChild(el("td", "mean-tox", num(state.summaries.mean_tox[i], 3)));
    row.appendChild(el("td", undefined, pct(state.summaries.tail_above_tau1[i])));
    table.appendChild(row);
  });
  panel.appendChild(table);
  return panel;
}

export function renderPatientsPanel(state: TrialStatePayload): HTMLElement {
  const panel = el("section", "panel patients-panel");
  panel.appendChild(el("h3", undefined, "Patients"));
  const table = el("table", "patients-table");
  const head = el("tr");
  for (const title of ["Id", "Level", "Kind", "Cycles observed", "DLT cycle"]) {
    head.appendChild(el("th", undefined, title));
  }
  table.appendChild(head);
  for (const p of state.patients) {
    const row = el("tr");
    row.appendChild(el("td", undefined, p.id));
    row.appendChild(el("td", undefined, String(p.dose_level)));
    row.appendChild(el("td", undefined, p.kind));
    row.appendChild(el("td", undefined, String(p.cycles_observed)));
    row.appendChild(el("td", undefined, p.dlt_cycle === null ? "—" : String(p.dlt_cycle)));
    table.appendChild(row);
  }
  panel.appendChild(table);

  if (state.backfill_ledger.length) {
    const ledger = el("p", "backfill-ledger");
    ledger.textContent =
      "Backfill ledger: " +
      state.backfill_ledger
        .map((c) => `level ${c.dose_level} (${c.patients.length} patients)`)
        .join("; ");
    panel.appendChild(ledger);
  }
  return panel;
}

export interface OutcomeFormHandle {
  element: HTMLElement;
  /** patients still missing their next cycle, as staged form rows */
  observations(): OutcomeObservation[];
}

export function renderOutcomeForm(
  state: TrialStatePayload,
  onSubmit: (observations: OutcomeObservation[]) => void,
): OutcomeFormHandle {
  const panel = el("section", "panel outcome-panel");
  panel.appendChild(el("h3", undefined, "Record cycle outcomes"));
  const form = el("form", "outcome-form") as HTMLFormElement;
  const total = state.config.followup_cycles;
  const pending: PatientRow[] = state.patients.filter(
    (p) => p.cycles_observed < total && p.dlt_cycle === null,
  );
  if (!pending.length) {
    form.appendChild(el("p", "nothing-pending", "No observations pending."));
  }
  for (const p of pending) {
    const row = el("label", "outcome-row");
    row.dataset.patient = p.id;
    row.dataset.cycle = String(p.cycles_observed + 1);
    const box = el("input") as HTMLInputElement;
    box.type = "checkbox";
    box.name = `dlt-${p.id}`;
    row.appendChild(box);
    row.appendChild(
      document.createTextNode(
        ` ${p.id} (level ${p.dose_level}) cycle ${p.cycles_observed + 1}: DLT?`,
      ),
    );
    form.appendChild(row);
  }
  const submit = el("button", "submit-outcomes", "Submit outcomes") as HTMLButtonElement;
  submit.type = "submit";
  if (state.rule_status.stopped || !pending.length) submit.disabled = true;
  form.appendChild(submit);
  const error = el("p", "form-error");
  form.appendChild(error);

  const observations = () =>
    pending.map((p) => {
      const box = form.querySelector<HTMLInputElement>(`input[name="dlt-${p.id}"]`);
      return {
        patient: p.id,
        cycle: p.cycles_observed + 1,
        dlt: Boolean(box?.checked),
      };
    });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    onSubmit(observations());
  });
  panel.appendChild(form);
  return { element: panel, observations };
}

export function renderWhatIfPanel(
  state: TrialStatePayload,
  onExplore: (hypothetical: OutcomeObservation[]) => void,
): HTMLElement {
  const panel = el("section", "panel whatif-panel");
  panel.appendChild(el("h3", undefined, "What if…"));
  if (state.rule_status.stopped) {
    panel.appendChild(el("p", "whatif-disabled", "Trial stopped; what-if disabled."));
    return panel;
  }
  const total = state.config.followup_cycles;
  const open = state.patients.filter(
    (p) => p.cycles_observed < total && p.dlt_cycle === null,
  );
  const clean = el("button", "whatif-clean", "All remaining DLT-free") as HTMLButtonElement;
  clean.type = "button";
  clean.addEventListener("click", () =>
    onExplore(open.map((p) => ({ patient: p.id, cycle: total, dlt: false }))),
  );
  const toxic = el("button", "whatif-toxic", "All remaining with DLTs") as HTMLButtonElement;
  toxic.type = "button";
  toxic.addEventListener("click", () =>
    onExplore(
      open.map((p) => ({ patient: p.id, cycle: p.cycles_observed + 1, dlt: true })),
    ),
  );
  if (!open.length) {
    clean.disabled = true;
    toxic.disabled = true;
  }
  panel.appendChild(clean);
  panel.appendChild(toxic);
  panel.appendChild(el("div", "whatif-results"));
  return panel;
}

export function renderWhatIfResult(
  state: TrialStatePayload,
  label: string,
  result: WhatIfResponse,
): HTMLElement {
  const card = el("div", "whatif-card");
  card.appendChild(el("h4", undefined, label));
  const currentLevel = state.rule_status.recommendation_level;
  card.appendChild(
    el(
      "p",
      "whatif-recommendation",
      `Recommendation: level ${result.recommendation_level} ` +
        `(now: level ${currentLevel})`,
    ),
  );
  card.appendChild(el("p", "whatif-status", stopReasonLabel(result.stop_reason)));
  card.appendChild(
    el("p", "whatif-cv", `CV(MTD): ${result.cv_mtd === null ? "—" : num(result.cv_mtd, 3)}`),
  );
  if (result.excluded_levels.length) {
    card.appendChild(
      el("p", "whatif-excluded", `Excluded levels: ${result.excluded_levels.join(", ")}`),
    );
  }
  return card;
}

export function renderTimeline(state: TrialStatePayload): HTMLElement {
  const panel = el("section", "panel timeline-panel");
  panel.appendChild(el("h3", undefined, "Event timeline"));
  const list = el("ol", "timeline");
  for (const event of state.events) {
    const type = String(event["type"]);
    let text = type;
    if (type === "enroll") {
      text = `enroll ${String((event["patients"] as string[]).length)} at level ${event["dose_level"]} (${event["kind"]})`;
    } else if (type === "observe" || type === "amend") {
      text = `${type}: ${event["patient"]} cycle ${event["cycle"]} ${event["dlt"] ? "DLT" : "no DLT"}`;
    } else if (type === "decide") {
      const response = event["response"] as Record<string, unknown> | undefined;
      text = `decide: level ${response?.["recommendation_level"]}, ${String(response?.["stop_reason"])}`;
    } else if (type === "created") {
      text = "trial created";
    }
    list.appendChild(el("li", `event event-${type}`, text));
  }
  panel.appendChild(list);
  return panel;
}

export function renderApp(
  state: TrialStatePayload,
  handlers: {
    onSubmit: (observations: OutcomeObservation[]) => void;
    onExplore: (hypothetical: OutcomeObservation[]) => void;
  },
): HTMLElement {
  const root = el("main", "app");
  root.appendChild(renderStatusPanel(state));
  root.appendChild(renderCurvePanel(state));
  root.appendChild(renderPatientsPanel(state));
  root.appendChild(renderOutcomeForm(state, handlers.onSubmit).element);
  root.appendChild(renderWhatIfPanel(state, handlers.onExplore));
  root.appendChild(renderTimeline(state));
  return root;
}
