import { describe, expect, it } from "vitest";

import { SPEAK_LABELS, type SpeakLabel } from "../src/labels.js";
import { EPS, TimelineModel, type TimeSegment } from "../src/timeline.js";

const NS: SpeakLabel = "NOT_SPEAKING";
const SA: SpeakLabel = "SPEAKING_AUDIBLE";
const SN: SpeakLabel = "SPEAKING_NOT_AUDIBLE";

/** Reference labeling: evaluate the paint history point-wise. */
function oracleLabelAt(
  history: Array<{ from: number; to: number; label: SpeakLabel }>,
  t: number,
): SpeakLabel | null {
  let out: SpeakLabel | null = null;
  for (const p of history) {
    if (t >= p.from && t < p.to) out = p.label;
  }
  return out;
}

// Tiny deterministic PRNG so failures reproduce.
function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("TimelineModel painting", () => {
  it("full-span paint yields one segment and enables submission", () => {
    const tl = new TimelineModel(0, 4);
    expect(tl.complete).toBe(false);
    tl.paint(0, 4, NS);
    expect(tl.segments).toEqual([{ start: 0, end: 4, label: NS }]);
    expect(tl.complete).toBe(true);
  });

  it("paint inside an existing segment splits it", () => {
    const tl = new TimelineModel(0, 3);
    tl.paint(0, 3, NS);
    tl.paint(1, 2, SA);
    expect(tl.segments).toEqual([
      { start: 0, end: 1, label: NS },
      { start: 1, end: 2, label: SA },
      { start: 2, end: 3, label: NS },
    ]);
  });

  it("adjacent same-label segments merge", () => {
    const tl = new TimelineModel(0, 4);
    tl.paint(0, 1, NS);
    tl.paint(1, 2, NS);
    expect(tl.segments).toEqual([{ start: 0, end: 2, label: NS }]);
  });

  it("rejects inverted and out-of-bounds intervals, model unchanged", () => {
    const tl = new TimelineModel(0, 4);
    tl.paint(0, 2, SA);
    const before = JSON.stringify(tl.segments);
    expect(() => tl.paint(2, 1, NS)).toThrow(RangeError);
    expect(() => tl.paint(1, 1, NS)).toThrow(RangeError);
    expect(() => tl.paint(3, 5, NS)).toThrow(RangeError);
    expect(JSON.stringify(tl.segments)).toBe(before);
  });

  it("partial overlap truncates neighbours on both sides", () => {
    const tl = new TimelineModel(0, 10);
    tl.paint(0, 4, NS);
    tl.paint(6, 10, SN);
    expect(tl.gaps()).toEqual([{ start: 4, end: 6 }]);
    expect(tl.complete).toBe(false);
    tl.paint(3, 7, SA);
    expect(tl.segments).toEqual([
      { start: 0, end: 3, label: NS },
      { start: 3, end: 7, label: SA },
      { start: 7, end: 10, label: SN },
    ]);
    expect(tl.complete).toBe(true);
  });

  it("painting marks the model dirty; clearDirty resets it", () => {
    const tl = new TimelineModel(0, 1);
    expect(tl.dirty).toBe(false);
    tl.paint(0, 1, SA);
    expect(tl.dirty).toBe(true);
    tl.clearDirty();
    expect(tl.dirty).toBe(false);
  });
});

describe("TimelineModel property tests", () => {
  it("1000 random paint sequences preserve every invariant", () => {
    const rand = mulberry32(20260823);
    for (let run = 0; run < 1000; run++) {
      const start = Math.round(rand() * 50) / 10;
      const span = 0.5 + Math.round(rand() * 95) / 10;
      const tl = new TimelineModel(start, start + span);
      const history: Array<{ from: number; to: number; label: SpeakLabel }> = [];
      const paints = 1 + Math.floor(rand() * 12);
      for (let i = 0; i < paints; i++) {
        let a = start + rand() * span;
        let b = start + rand() * span;
        if (a > b) [a, b] = [b, a];
        if (b - a < 1e-6) b = Math.min(a + 0.05, start + span);
        if (!(b > a)) continue;
        const label = SPEAK_LABELS[Math.floor(rand() * 3)]!;
        tl.paint(a, b, label);
        history.push({ from: a, to: b, label });
        tl.checkInvariants();
      }
      // Point-wise agreement with the replayed history, away from edges.
      for (let k = 0; k < 25; k++) {
        const t = start + rand() * span;
        const nearEdge = history.some(
          (p) => Math.abs(t - p.from) < 1e-6 || Math.abs(t - p.to) < 1e-6,
        );
        if (nearEdge) continue;
        expect(tl.labelAt(t)).toBe(oracleLabelAt(history, t));
      }
      // Coverage bookkeeping: segments plus gaps tile the whole span.
      const covered = tl.segments.reduce((acc, s) => acc + (s.end - s.start), 0);
      const gapTotal = tl.gaps().reduce((acc, g) => acc + (g.end - g.start), 0);
      expect(covered + gapTotal).toBeCloseTo(span, 6);
      expect(tl.complete).toBe(tl.gaps().length === 0 && tl.segments.length > 0);
    }
  });

  it("clone is independent and preserves segments", () => {
    const tl = new TimelineModel(0, 2);
    tl.paint(0, 1, SA);
    const copy = tl.clone();
    copy.paint(1, 2, NS);
    expect(tl.segments.length).toBe(1);
    expect(copy.segments.length).toBe(2);
    expect(copy.segments[0]).toEqual(tl.segments[0]);
  });

  it("labelAt covers segment edges consistently", () => {
    const tl = new TimelineModel(0, 2);
    tl.paint(0, 1, SA);
    tl.paint(1, 2, NS);
    expect(tl.labelAt(0)).toBe(SA);
    expect(tl.labelAt(1)).toBe(NS); // half-open [start, end) interior edges
    expect(tl.labelAt(2)).toBe(NS); // the final end is inclusive
    expect(tl.labelAt(2 + 10 * EPS)).toBe(null);
  });
});
