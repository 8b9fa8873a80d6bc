import { describe, expect, it } from 'vitest';
import { fmt, fmtAction, stepLabel } from '../src/format.js';

describe('formatting', () => {
  it('formats magnitudes sensibly', () => {
    expect(fmt(0)).toBe('0');
    expect(fmt(550)).toBe('550');
    expect(fmt(16595.1)).toMatch(/e\+?4|1\.660e/i);
    expect(fmt(NaN)).toBe('–');
  });

  it('always shows physical and normalized values together', () => {
    const s = fmtAction({ w: 550 }, [0.0]);
    expect(s).toContain('w = 550');
    expect(s).toContain('norm 0');
  });

  it('clamps the step label to the horizon', () => {
    expect(stepLabel(3, 5)).toBe('step 3 of 5');
    expect(stepLabel(6, 5)).toBe('step 5 of 5');
  });
});
