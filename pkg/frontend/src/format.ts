// Numeric display helpers: every action shows physical units alongside the
// normalized coordinate actually used by the policy.

export function fmt(x: number, digits = 4): string {
  if (!Number.isFinite(x)) return '–';
  if (x === 0) return '0';
  const ax = Math.abs(x);
  if (ax >= 10000 || ax < 0.001) return x.toExponential(Math.max(digits - 1, 0));
  return x.toPrecision(digits).replace(/\.?0+$/, (m) => (m.includes('.') ? '' : m));
}

export function fmtAction(
  physical: Record<string, number>,
  normalized: number[],
): string {
  const parts = Object.entries(physical).map(
    ([name, value], i) => `${name} = ${fmt(value)} (norm ${fmt(normalized[i], 3)})`,
  );
  return parts.join(',  ');
}

export function stepLabel(step: number, horizon: number): string {
  return `step ${Math.min(step, horizon)} of ${horizon}`;
}
