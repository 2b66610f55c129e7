import { describe, expect, it } from 'vitest';

import {
  autoPosition,
  nextNodeId,
  normalizeDoc,
  sanitizeName,
  validateDoc,
  wouldCreateCycle,
} from '../src/model.js';
import { MAG7_DOC } from './mock-service.js';

describe('normalizeDoc', () => {
  it('flattens nested prior lists', () => {
    const doc = normalizeDoc(MAG7_DOC);
    expect(doc.nodes['2'].priors).toEqual(['1']);
    expect(doc.nodes['4'].priors).toEqual(['3']);
  });

  it('fills missing fields with defaults', () => {
    const doc = normalizeDoc({ nodes: { a: {} } });
    expect(doc.nodes['a']).toMatchObject({
      name: '',
      priors: [],
      run: false,
      input: { text: '', files: [] },
      output: { text: '', files: [] },
    });
  });

  it('keeps unknown keys', () => {
    const doc = normalizeDoc({ _ui: { positions: { '1': { x: 5, y: 6 } } }, nodes: {} });
    expect(doc._ui?.positions?.['1']).toEqual({ x: 5, y: 6 });
  });
});

describe('nextNodeId', () => {
  it('picks the smallest unused positive integer', () => {
    expect(nextNodeId(normalizeDoc(MAG7_DOC))).toBe('5');
    expect(nextNodeId(normalizeDoc({ nodes: {} }))).toBe('1');
    expect(nextNodeId(normalizeDoc({ nodes: { '1': {}, '3': {} } }))).toBe('2');
  });
});

describe('sanitizeName', () => {
  it('matches the engine folder rule', () => {
    expect(sanitizeName('download mag7')).toBe('download_mag7');
    expect(sanitizeName('Compute 20Day-MA')).toBe('compute_20day_ma');
    expect(sanitizeName('a--b')).toBe('a__b');
  });
});

describe('wouldCreateCycle', () => {
  const doc = normalizeDoc(MAG7_DOC);

  it('rejects self edges', () => {
    expect(wouldCreateCycle(doc, '1', '1')).toBe(true);
  });

  it('rejects back edges along an existing path', () => {
    // 1 -> 3 -> 4 already exists, so 4 -> 1 closes a loop
    expect(wouldCreateCycle(doc, '4', '1')).toBe(true);
    expect(wouldCreateCycle(doc, '3', '1')).toBe(true);
  });

  it('accepts forward and cross edges', () => {
    expect(wouldCreateCycle(doc, '2', '4')).toBe(false);
    expect(wouldCreateCycle(doc, '1', '4')).toBe(false);
  });
});

describe('validateDoc', () => {
  it('accepts the fixture document', () => {
    expect(validateDoc(normalizeDoc(MAG7_DOC))).toEqual([]);
  });

  it('reports cycles', () => {
    const doc = normalizeDoc({
      nodes: {
        a: { name: 'na', priors: ['b'] },
        b: { name: 'nb', priors: ['a'] },
      },
    });
    expect(validateDoc(doc).map((d) => d.code)).toContain('cycle');
  });

  it('reports dangling priors and duplicate folder names', () => {
    const doc = normalizeDoc({
      nodes: {
        a: { name: 'Plot Data', priors: ['ghost'] },
        b: { name: 'plot data' },
      },
    });
    const codes = validateDoc(doc).map((d) => d.code);
    expect(codes).toContain('dangling_prior');
    expect(codes).toContain('duplicate_sanitized_name');
  });
});

describe('autoPosition', () => {
  it('is deterministic and column-ordered by depth', () => {
    const doc = normalizeDoc(MAG7_DOC);
    const p1 = autoPosition(doc, '1');
    const p3 = autoPosition(doc, '3');
    const p4 = autoPosition(doc, '4');
    expect(autoPosition(doc, '1')).toEqual(p1);
    expect(p3.x).toBeGreaterThan(p1.x);
    expect(p4.x).toBeGreaterThan(p3.x);
  });
});
