// Trajectory CSV handling for observation upload (header: t,value).

export type TrajectoryData = { t0: number; dt: number; values: number[] };

export function parseTrajectoryCsv(text: string): TrajectoryData {
  const lines = text
    .split(/\r?\n/)
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  if (lines.length < 3) {
    throw new Error('CSV needs a header and at least two samples');
  }
  const header = lines[0].split(',').map((c) => c.trim().toLowerCase());
  if (header[0] !== 't' || header[1] !== 'value') {
    throw new Error("CSV must start with the header 't,value'");
  }
  const ts: number[] = [];
  const values: number[] = [];
  for (const line of lines.slice(1)) {
    const [tRaw, vRaw] = line.split(',');
    const t = Number(tRaw);
    const v = Number(vRaw);
    if (!Number.isFinite(t) || !Number.isFinite(v)) {
      throw new Error(`malformed CSV row: ${line}`);
    }
    ts.push(t);
    values.push(v);
  }
  const dt = ts[1] - ts[0];
  if (!(dt > 0)) {
    throw new Error('time column must be increasing');
  }
  for (let i = 1; i < ts.length; i++) {
    const step = ts[i] - ts[i - 1];
    if (Math.abs(step - dt) > 1e-6 * Math.max(dt, 1e-12)) {
      throw new Error('time grid must be uniform');
    }
  }
  return { t0: ts[0], dt, values };
}
