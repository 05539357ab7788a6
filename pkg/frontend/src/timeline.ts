/** Timeline model: an ordered list of colored label segments over the
 * track's time span.
 *
 * Invariants (checked by `checkInvariants` and preserved by every
 * operation):
 *  - segments are ordered, non-empty, non-overlapping;
 *  - every segment lies within the track bounds;
 *  - adjacent segments never share a label (they would have been merged).
 * Submission is enabled exactly when the segments cover the whole span.
 */

import type { SpeakLabel } from "./labels.js";

export interface TimeSegment {
  start: number;
  end: number;
  label: SpeakLabel;
}

/** Numeric slack for float comparisons on segment endpoints. */
export const EPS = 1e-9;

export class TimelineModel {
  readonly start: number;
  readonly end: number;
  private _segments: TimeSegment[] = [];
  private _dirty = false;

  constructor(start: number, end: number, segments: readonly TimeSegment[] = []) {
    if (!(end > start)) {
      throw new RangeError(`empty track span [${start}, ${end}]`);
    }
    this.start = start;
    this.end = end;
    for (const seg of segments) {
      this.paint(seg.start, seg.end, seg.label);
    }
    this._dirty = false;
  }

  get segments(): readonly TimeSegment[] {
    return this._segments;
  }

  get dirty(): boolean {
    return this._dirty;
  }

  clearDirty(): void {
    this._dirty = false;
  }

  /** Paint `label` over [from, to], overwriting anything underneath.
   * Inverted or out-of-bounds intervals are rejected and the model is
   * left unchanged. */
  paint(from: number, to: number, label: SpeakLabel): void {
    if (!(to > from)) {
      throw new RangeError(`inverted or empty interval [${from}, ${to}]`);
    }
    if (from < this.start - EPS || to > this.end + EPS) {
      throw new RangeError(
        `interval [${from}, ${to}] outside track span [${this.start}, ${this.end}]`,
      );
    }
    from = Math.max(from, this.start);
    to = Math.min(to, this.end);

    const out: TimeSegment[] = [];
    for (const seg of this._segments) {
      // Keep the parts of existing segments that the new interval does
      // not cover; a segment straddling the interval splits in two.
      if (seg.start < from - EPS) {
        out.push({ start: seg.start, end: Math.min(seg.end, from), label: seg.label });
      }
      if (seg.end > to + EPS) {
        out.push({ start: Math.max(seg.start, to), end: seg.end, label: seg.label });
      }
    }
    out.push({ start: from, end: to, label });
    out.sort((a, b) => a.start - b.start);

    // Merge touching same-label neighbors and drop degenerate slivers.
    const merged: TimeSegment[] = [];
    for (const seg of out) {
      if (seg.end - seg.start <= EPS) continue;
      const prev = merged[merged.length - 1];
      if (prev && seg.label === prev.label && seg.start - prev.end <= EPS) {
        prev.end = seg.end;
      } else {
        merged.push({ ...seg });
      }
    }
    this._segments = merged;
    this._dirty = true;
  }

  /** Label at time t, or null on an unpainted gap. */
  labelAt(t: number): SpeakLabel | null {
    for (const seg of this._segments) {
      if (t >= seg.start - EPS && t < seg.end) return seg.label;
    }
    const last = this._segments[this._segments.length - 1];
    if (last && Math.abs(t - last.end) <= EPS) return last.label;
    return null;
  }

  /** Unpainted intervals, in order. */
  gaps(): Array<{ start: number; end: number }> {
    const out: Array<{ start: number; end: number }> = [];
    let cursor = this.start;
    for (const seg of this._segments) {
      if (seg.start - cursor > EPS) out.push({ start: cursor, end: seg.start });
      cursor = Math.max(cursor, seg.end);
    }
    if (this.end - cursor > EPS) out.push({ start: cursor, end: this.end });
    return out;
  }

  /** True when the union of segments equals the whole track span. */
  get complete(): boolean {
    return this._segments.length > 0 && this.gaps().length === 0;
  }

  /** Throws if any model invariant is violated. */
  checkInvariants(): void {
    let prev: TimeSegment | undefined;
    for (const seg of this._segments) {
      if (!(seg.end > seg.start)) {
        throw new Error(`empty segment [${seg.start}, ${seg.end}]`);
      }
      if (seg.start < this.start - EPS || seg.end > this.end + EPS) {
        throw new Error(`segment [${seg.start}, ${seg.end}] outside bounds`);
      }
      if (prev) {
        if (seg.start < prev.end - EPS) {
          throw new Error(`segments overlap at ${seg.start}`);
        }
        if (seg.label === prev.label && seg.start - prev.end <= EPS) {
          throw new Error(`unmerged adjacent ${seg.label} segments at ${seg.start}`);
        }
      }
      prev = seg;
    }
  }

  /** Segments in the wire format of the annotation service. */
  toWire(): Array<{ start: number; end: number; label: SpeakLabel }> {
    return this._segments.map((s) => ({ start: s.start, end: s.end, label: s.label }));
  }

  clone(): TimelineModel {
    const copy = new TimelineModel(this.start, this.end, this._segments);
    copy._dirty = this._dirty;
    return copy;
  }
}
