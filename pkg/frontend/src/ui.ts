// Pure render functions: each takes server payloads and returns HTML.
// No client-side shadow state: views derive from the latest GET of the
// session, so a page reload reconstructs exactly what the server knows.

import { CheckpointInfo, Recommendation, ScenarioInfo, SessionView } from './api.js';
import { bandChart, lineChart } from './chart.js';
import { fmt, fmtAction, stepLabel } from './format.js';

export function esc(s: string): string {
  return s.replace(/[&<>"']/g, (c) =>
    ({ '&': '&amp;', '<': '&lt;', '>': '&gt;', '"': '&quot;', "'": '&#39;' })[c]!,
  );
}

export function renderWizard(
  scenarios: ScenarioInfo[],
  checkpoints: CheckpointInfo[],
): string {
  const scenarioOpts = scenarios
    .map((s) => `<option value="${esc(s.scenario)}">${esc(s.scenario)}</option>`)
    .join('');
  const ckptOpts = checkpoints
    .map(
      (c) =>
        `<option value="${esc(c.checkpoint_id)}" data-scenario="${esc(c.scenario)}">` +
        `${esc(c.checkpoint_id)} (${esc(c.scenario)})</option>`,
    )
    .join('');
  return `
  <section class="card" id="wizard">
    <h2>New design session</h2>
    <label>Scenario
      <select id="wizard-scenario">${scenarioOpts}</select>
    </label>
    <label>Policy checkpoint
      <select id="wizard-checkpoint">${ckptOpts}</select>
    </label>
    <label>Mode
      <select id="wizard-mode">
        <option value="deterministic">deterministic (policy mean)</option>
        <option value="stochastic">stochastic (recorded seed)</option>
      </select>
    </label>
    <button id="wizard-create">Create session</button>
    <div class="error" id="wizard-error"></div>
  </section>`;
}

export function renderSessionList(sessions: SessionView[]): string {
  if (sessions.length === 0) {
    return '<p class="muted">No sessions yet.</p>';
  }
  const rows = sessions
    .map(
      (s) => `
    <tr data-session="${esc(s.session_id)}" class="session-row">
      <td><a href="#" class="open-session" data-session="${esc(s.session_id)}">${esc(s.session_id)}</a></td>
      <td>${esc(s.scenario)}</td>
      <td>${stepLabel(s.step, s.horizon)}</td>
      <td class="status-${esc(s.status)}">${esc(s.status)}</td>
    </tr>`,
    )
    .join('');
  return `
  <table class="sessions">
    <thead><tr><th>session</th><th>scenario</th><th>progress</th><th>status</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

export function renderRecommendation(rec: Recommendation, horizon: number): string {
  const values = Object.entries(rec.physical)
    .map(
      ([name, value], i) => `
      <div class="rec-value">
        <span class="rec-name">${esc(name)}</span>
        <code class="rec-phys" data-copy="${value}">${fmt(value, 6)}</code>
        <span class="rec-norm">norm ${fmt(rec.normalized[i], 4)}</span>
      </div>`,
    )
    .join('');
  return `
  <div class="card recommendation" id="recommendation">
    <h3>Recommended action — ${stepLabel(rec.step, horizon)}</h3>
    ${values}
    <div class="muted">mode: ${esc(rec.mode)}${rec.seed !== undefined ? `, seed ${rec.seed}` : ''}</div>
  </div>`;
}

export function renderObservationForm(
  scenario: ScenarioInfo,
  step: number,
): string {
  if (scenario.observation.kind === 'scalar') {
    const names = scenario.observation.dim === 2 ? ['gfp_ss', 'growth_rel'] : ['gfp_ss'];
    const inputs = names
      .map(
        (n, i) => `
      <label>${esc(n)}
        <input type="number" step="any" min="0" class="obs-scalar" data-index="${i}" id="obs-${i}">
      </label>`,
      )
      .join('');
    return `
    <div class="card" id="observation-form">
      <h3>Enter observation for step ${step}</h3>
      ${inputs}
      <button id="obs-submit">Submit observation</button>
      <div class="error" id="obs-error"></div>
    </div>`;
  }
  return `
  <div class="card" id="observation-form">
    <h3>Upload trajectory for step ${step}</h3>
    <p class="muted">CSV with header <code>t,value</code>, uniform time grid,
    ${scenario.observation.dim} samples.</p>
    <input type="file" id="obs-file" accept=".csv,text/csv">
    <div id="obs-preview"></div>
    <button id="obs-submit" disabled>Submit observation</button>
    <div class="error" id="obs-error"></div>
  </div>`;
}

export function renderTimeline(
  session: SessionView,
  scenario: ScenarioInfo,
): string {
  const entries: string[] = [];
  for (let i = 0; i < session.recommendations.length; i++) {
    const rec = session.recommendations[i];
    entries.push(`
      <div class="timeline-entry">
        <div class="timeline-step">step ${rec.step}</div>
        <div class="timeline-action">action: ${esc(fmtAction(rec.physical, rec.normalized))}</div>
        ${i < session.observations.length ? renderObservationSummary(session.observations[i], scenario) : '<div class="muted">awaiting observation</div>'}
      </div>`);
  }
  return `<div class="card" id="timeline"><h3>Session history</h3>${entries.join('')}</div>`;
}

function renderObservationSummary(
  obs: { scalar?: number[]; trajectory?: { t0: number; dt: number; values: number[] } },
  scenario: ScenarioInfo,
): string {
  if (obs.scalar) {
    const names = scenario.observation.dim === 2 ? ['gfp_ss', 'growth_rel'] : ['gfp_ss'];
    return `<div class="timeline-obs">observed: ${obs.scalar
      .map((v, i) => `${names[i]} = ${fmt(v, 5)}`)
      .join(', ')}</div>`;
  }
  if (obs.trajectory) {
    return `<div class="timeline-obs">${lineChart([
      {
        label: 'p1(t)',
        values: obs.trajectory.values,
        t0: obs.trajectory.t0,
        dt: obs.trajectory.dt,
      },
    ])}</div>`;
  }
  return '';
}

export function renderWhatIfPanel(scenario: ScenarioInfo): string {
  const sliders = Object.entries(scenario.action_bounds)
    .map(
      ([name, [lo, hi]]) => `
    <label>${esc(name)} <span id="whatif-val-${esc(name)}"></span>
      <input type="range" class="whatif-slider" data-name="${esc(name)}"
             min="${lo}" max="${hi}" step="${(hi - lo) / 200}" value="${(lo + hi) / 2}">
    </label>`,
    )
    .join('');
  return `
  <div class="card" id="whatif">
    <h3>What-if (prior-predictive over 100 draws)</h3>
    ${sliders}
    <button id="whatif-run">Simulate candidate</button>
    <div id="whatif-result"></div>
  </div>`;
}

export function renderWhatIfResult(raw: string): string {
  const data = JSON.parse(raw) as {
    label: string;
    n_effective: number;
    n_failed: number;
    quantiles: Record<string, { q10: number; q50: number; q90: number } | null>;
    band_trajectories?: Record<string, { t0: number; dt: number; values: number[] }>;
  };
  const quantiles = Object.entries(data.quantiles)
    .map(([name, q]) =>
      q
        ? `<div>${esc(name)}: q10 ${fmt(q.q10)}, q50 ${fmt(q.q50)}, q90 ${fmt(q.q90)}</div>`
        : `<div>${esc(name)}: undefined (no oscillation detected)</div>`,
    )
    .join('');
  let chart = '';
  if (data.band_trajectories) {
    const b = data.band_trajectories;
    if (b.q10 && b.q50 && b.q90) {
      chart = bandChart(
        { label: 'q10', values: b.q10.values, t0: b.q10.t0, dt: b.q10.dt },
        { label: 'q50', values: b.q50.values, t0: b.q50.t0, dt: b.q50.dt },
        { label: 'q90', values: b.q90.values, t0: b.q90.t0, dt: b.q90.dt },
        'p1(t)',
      );
    }
  }
  return `
    <div class="muted">${esc(data.label)} — ${data.n_effective} effective samples` +
    `${data.n_failed ? `, ${data.n_failed} failed` : ''}</div>
    ${quantiles}${chart}
    <details><summary>raw server response</summary>
    <pre class="raw-json">${esc(raw)}</pre></details>`;
}

export function renderComplete(session: SessionView): string {
  return `
  <div class="card complete" id="session-complete">
    <h3>Session complete</h3>
    <p>All ${session.horizon} observations recorded. The timeline below is the
    full design trace.</p>
  </div>`;
}
