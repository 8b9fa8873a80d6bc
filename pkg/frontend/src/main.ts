// Application wiring: one user action = one API call, then re-render from
// the server's response. No optimistic updates.

import { api, ApiError, ScenarioInfo, SessionView } from './api.js';
import { parseTrajectoryCsv, TrajectoryData } from './csv.js';
import { lineChart } from './chart.js';
import {
  renderComplete,
  renderObservationForm,
  renderRecommendation,
  renderSessionList,
  renderTimeline,
  renderWhatIfPanel,
  renderWhatIfResult,
  renderWizard,
} from './ui.js';

type AppState = {
  scenarios: ScenarioInfo[];
  checkpoints: Awaited<ReturnType<typeof api.checkpoints>>;
  currentSession: string | null;
  pendingTrajectory: TrajectoryData | null;
};

const state: AppState = {
  scenarios: [],
  checkpoints: [],
  currentSession: null,
  pendingTrajectory: null,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function scenarioInfo(name: string): ScenarioInfo {
  const info = state.scenarios.find((s) => s.scenario === name);
  if (!info) throw new Error(`unknown scenario ${name}`);
  return info;
}

async function refreshHome(): Promise<void> {
  const [scenarios, checkpoints, sessions] = await Promise.all([
    api.scenarios(),
    api.checkpoints(),
    api.listSessions(),
  ]);
  state.scenarios = scenarios;
  state.checkpoints = checkpoints;
  el('wizard-root').innerHTML = renderWizard(scenarios, checkpoints);
  el('sessions-root').innerHTML = renderSessionList(sessions);
  el('wizard-create').addEventListener('click', onCreateSession);
  for (const link of document.querySelectorAll<HTMLAnchorElement>('.open-session')) {
    link.addEventListener('click', (ev) => {
      ev.preventDefault();
      void openSession(link.dataset.session!);
    });
  }
}

async function onCreateSession(): Promise<void> {
  const scenario = el<HTMLSelectElement>('wizard-scenario').value;
  const checkpoint = el<HTMLSelectElement>('wizard-checkpoint').value;
  const mode = el<HTMLSelectElement>('wizard-mode').value;
  try {
    const created = await api.createSession(scenario, checkpoint, mode);
    await openSession(created.session_id);
  } catch (err) {
    el('wizard-error').textContent =
      err instanceof ApiError ? `${err.message}` : String(err);
  }
}

async function openSession(id: string): Promise<void> {
  state.currentSession = id;
  state.pendingTrajectory = null;
  const session = await api.getSession(id);
  renderSession(session);
}

function renderSession(session: SessionView): void {
  const info = scenarioInfo(session.scenario);
  const root = el('session-root');
  const parts: string[] = [
    `<h2>Session ${session.session_id} — ${session.scenario}</h2>`,
  ];
  if (session.status === 'complete') {
    parts.push(renderComplete(session));
  } else {
    const rec = session.recommendations[session.recommendations.length - 1];
    parts.push(renderRecommendation(rec, session.horizon));
    parts.push(renderObservationForm(info, rec.step));
    parts.push(renderWhatIfPanel(info));
  }
  parts.push(renderTimeline(session, info));
  root.innerHTML = parts.join('');

  if (session.status !== 'complete') {
    wireObservationForm(session, info);
    wireWhatIf(session, info);
  }
}

function wireObservationForm(session: SessionView, info: ScenarioInfo): void {
  const submit = el<HTMLButtonElement>('obs-submit');
  if (info.observation.kind === 'scalar') {
    submit.addEventListener('click', () => void submitScalar(session, info));
    return;
  }
  const file = el<HTMLInputElement>('obs-file');
  file.addEventListener('change', async () => {
    const f = file.files?.[0];
    if (!f) return;
    try {
      const traj = parseTrajectoryCsv(await f.text());
      if (traj.values.length !== info.observation.dim) {
        throw new Error(
          `expected ${info.observation.dim} samples, got ${traj.values.length}`,
        );
      }
      state.pendingTrajectory = traj;
      el('obs-preview').innerHTML = lineChart([
        { label: 'uploaded p1(t)', values: traj.values, t0: traj.t0, dt: traj.dt },
      ]);
      submit.disabled = false;
      el('obs-error').textContent = '';
    } catch (err) {
      state.pendingTrajectory = null;
      submit.disabled = true;
      el('obs-error').textContent = String(err instanceof Error ? err.message : err);
    }
  });
  submit.addEventListener('click', () => void submitTrajectory(session));
}

async function submitScalar(session: SessionView, info: ScenarioInfo): Promise<void> {
  const values: number[] = [];
  for (let i = 0; i < info.observation.dim; i++) {
    const v = Number(el<HTMLInputElement>(`obs-${i}`).value);
    if (!Number.isFinite(v) || v < 0) {
      el('obs-error').textContent = 'observations must be finite and nonnegative';
      return;
    }
    values.push(v);
  }
  await submitAndRefresh(session, { scalar: values, step: session.step });
}

async function submitTrajectory(session: SessionView): Promise<void> {
  if (!state.pendingTrajectory) return;
  await submitAndRefresh(session, {
    trajectory: state.pendingTrajectory,
    step: session.step,
  });
}

async function submitAndRefresh(
  session: SessionView,
  payload: Parameters<typeof api.submitObservation>[1],
): Promise<void> {
  try {
    const result = await api.submitObservation(session.session_id, payload);
    if (result.estimated_frequency !== undefined) {
      // surfaced on the refreshed timeline; keep a toast for immediacy
      console.info('estimated frequency:', result.estimated_frequency);
    }
    await openSession(session.session_id);
    await refreshHome();
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      el('obs-error').textContent = `${err.message} — refreshing session`;
      await openSession(session.session_id);
    } else {
      el('obs-error').textContent = String(err instanceof Error ? err.message : err);
    }
  }
}

function wireWhatIf(session: SessionView, info: ScenarioInfo): void {
  const sliders = Array.from(
    document.querySelectorAll<HTMLInputElement>('.whatif-slider'),
  );
  const update = () => {
    for (const s of sliders) {
      el(`whatif-val-${s.dataset.name}`).textContent = s.value;
    }
  };
  for (const s of sliders) s.addEventListener('input', update);
  update();
  el('whatif-run').addEventListener('click', async () => {
    const action: Record<string, number> = {};
    for (const s of sliders) action[s.dataset.name!] = Number(s.value);
    el('whatif-result').innerHTML = '<p class="muted">simulating…</p>';
    try {
      const { raw } = await api.whatIf(session.session_id, action, 100);
      el('whatif-result').innerHTML = renderWhatIfResult(raw);
    } catch (err) {
      el('whatif-result').innerHTML = `<div class="error">${String(
        err instanceof Error ? err.message : err,
      )}</div>`;
    }
  });
}

export async function start(): Promise<void> {
  await refreshHome();
}

if (typeof document !== 'undefined' && document.getElementById('wizard-root')) {
  void start();
}
