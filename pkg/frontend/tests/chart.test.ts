import { describe, expect, it } from 'vitest';
import { bandChart, lineChart } from '../src/chart.js';

describe('charts', () => {
  it('renders one path per series', () => {
    const svg = lineChart([
      { label: 'a', values: [1, 2, 3] },
      { label: 'b', values: [3, 2, 1] },
    ]);
    expect(svg).toContain('<svg');
    expect((svg.match(/<path /g) ?? []).length).toBe(2);
    expect(svg).toContain('a');
  });

  it('band chart closes the quantile region', () => {
    const mk = (vals: number[]) => ({ label: 'q', values: vals, t0: 0, dt: 1 });
    const svg = bandChart(mk([0, 0, 0]), mk([1, 2, 1]), mk([3, 4, 3]));
    expect(svg).toContain('Z"');
    expect(svg).toContain('fill="#2563eb22"');
  });

  it('tolerates empty input', () => {
    expect(lineChart([])).toContain('<svg');
  });
});
