// Dependency-free SVG charts: trajectory lines and quantile bands.

export type Series = { label: string; values: number[]; t0?: number; dt?: number };

const W = 640;
const H = 220;
const PAD = { left: 48, right: 12, top: 12, bottom: 28 };

function scale(
  domain: [number, number],
  range: [number, number],
): (x: number) => number {
  const [d0, d1] = domain;
  const [r0, r1] = range;
  const span = d1 - d0 || 1;
  return (x) => r0 + ((x - d0) / span) * (r1 - r0);
}

function pathFor(
  xs: number[],
  ys: number[],
  sx: (x: number) => number,
  sy: (y: number) => number,
): string {
  return xs
    .map((x, i) => `${i === 0 ? 'M' : 'L'}${sx(x).toFixed(1)},${sy(ys[i]).toFixed(1)}`)
    .join('');
}

const COLORS = ['#2563eb', '#059669', '#d97706', '#dc2626', '#7c3aed'];

export function lineChart(series: Series[], yLabel = ''): string {
  if (series.length === 0 || series.every((s) => s.values.length === 0)) {
    return '<svg class="chart" viewBox="0 0 640 220"></svg>';
  }
  let ymin = Infinity;
  let ymax = -Infinity;
  let xmax = 0;
  for (const s of series) {
    const dt = s.dt ?? 1;
    const t0 = s.t0 ?? 0;
    xmax = Math.max(xmax, t0 + dt * (s.values.length - 1));
    for (const v of s.values) {
      ymin = Math.min(ymin, v);
      ymax = Math.max(ymax, v);
    }
  }
  if (ymin === ymax) {
    ymin -= 1;
    ymax += 1;
  }
  const sx = scale([0, xmax], [PAD.left, W - PAD.right]);
  const sy = scale([ymin, ymax], [H - PAD.bottom, PAD.top]);
  const paths = series
    .map((s, k) => {
      const dt = s.dt ?? 1;
      const t0 = s.t0 ?? 0;
      const xs = s.values.map((_, i) => t0 + i * dt);
      return `<path d="${pathFor(xs, s.values, sx, sy)}" fill="none" ` +
        `stroke="${COLORS[k % COLORS.length]}" stroke-width="1.5"/>`;
    })
    .join('');
  const legend = series
    .map(
      (s, k) =>
        `<text x="${PAD.left + 8 + k * 120}" y="${PAD.top + 10}" ` +
        `fill="${COLORS[k % COLORS.length]}" font-size="11">${s.label}</text>`,
    )
    .join('');
  return (
    `<svg class="chart" viewBox="0 0 ${W} ${H}" role="img">` +
    axis(sx, sy, ymin, ymax, xmax, yLabel) +
    paths +
    legend +
    '</svg>'
  );
}

/** Shaded band between lo and hi with a median line, e.g. what-if quantiles. */
export function bandChart(
  lo: Series,
  mid: Series,
  hi: Series,
  yLabel = '',
): string {
  const dt = mid.dt ?? 1;
  const t0 = mid.t0 ?? 0;
  const n = Math.min(lo.values.length, mid.values.length, hi.values.length);
  const xs = Array.from({ length: n }, (_, i) => t0 + i * dt);
  let ymin = Infinity;
  let ymax = -Infinity;
  for (let i = 0; i < n; i++) {
    ymin = Math.min(ymin, lo.values[i]);
    ymax = Math.max(ymax, hi.values[i]);
  }
  if (ymin === ymax) {
    ymin -= 1;
    ymax += 1;
  }
  const sx = scale([t0, xs[n - 1] ?? 1], [PAD.left, W - PAD.right]);
  const sy = scale([ymin, ymax], [H - PAD.bottom, PAD.top]);
  const upper = pathFor(xs, hi.values.slice(0, n), sx, sy);
  const lowerRev = xs
    .slice()
    .reverse()
    .map(
      (x, i) =>
        `L${sx(x).toFixed(1)},${sy(lo.values[n - 1 - i]).toFixed(1)}`,
    )
    .join('');
  const band = `${upper}${lowerRev}Z`;
  return (
    `<svg class="chart" viewBox="0 0 ${W} ${H}" role="img">` +
    axis(sx, sy, ymin, ymax, xs[n - 1] ?? 1, yLabel) +
    `<path d="${band}" fill="#2563eb22" stroke="none"/>` +
    `<path d="${pathFor(xs, mid.values.slice(0, n), sx, sy)}" fill="none" ` +
    `stroke="#2563eb" stroke-width="1.5"/>` +
    `<text x="${PAD.left + 8}" y="${PAD.top + 10}" fill="#2563eb" font-size="11">` +
    `${mid.label} (band: ${lo.label}–${hi.label})</text>` +
    '</svg>'
  );
}

function axis(
  sx: (x: number) => number,
  sy: (y: number) => number,
  ymin: number,
  ymax: number,
  xmax: number,
  yLabel: string,
): string {
  const x0 = sx(0);
  const y0 = sy(ymin);
  const ticksY = [ymin, (ymin + ymax) / 2, ymax];
  const ticksX = [0, xmax / 2, xmax];
  const fmtTick = (v: number) =>
    Math.abs(v) >= 1000 ? v.toExponential(1) : String(Math.round(v * 100) / 100);
  return (
    `<line x1="${x0}" y1="${sy(ymax)}" x2="${x0}" y2="${y0}" stroke="#888"/>` +
    `<line x1="${x0}" y1="${y0}" x2="${sx(xmax)}" y2="${y0}" stroke="#888"/>` +
    ticksY
      .map(
        (v) =>
          `<text x="${x0 - 6}" y="${sy(v) + 4}" text-anchor="end" ` +
          `font-size="10" fill="#555">${fmtTick(v)}</text>`,
      )
      .join('') +
    ticksX
      .map(
        (v) =>
          `<text x="${sx(v)}" y="${y0 + 16}" text-anchor="middle" ` +
          `font-size="10" fill="#555">${fmtTick(v)}</text>`,
      )
      .join('') +
    (yLabel
      ? `<text x="${PAD.left}" y="${H - 4}" font-size="10" fill="#555">${yLabel}</text>`
      : '')
  );
}
