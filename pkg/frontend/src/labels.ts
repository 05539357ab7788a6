/** Shared label vocabulary and the canonical CSV rendering.
 *
 * The CSV format must match the annotation service byte for byte: eight
 * comma-separated fields, floats with exactly six decimals, rows sorted
 * by (video, track, timestamp).
 */

export type SpeakLabel = "NOT_SPEAKING" | "SPEAKING_AUDIBLE" | "SPEAKING_NOT_AUDIBLE";

export const SPEAK_LABELS: readonly SpeakLabel[] = [
  "NOT_SPEAKING",
  "SPEAKING_AUDIBLE",
  "SPEAKING_NOT_AUDIBLE",
];

/** Timeline/box overlay colors: green = speaking & audible, red = not
 * speaking, yellow = speaking but inaudible. */
export const LABEL_COLORS: Record<SpeakLabel, string> = {
  SPEAKING_AUDIBLE: "#2e9e4f",
  NOT_SPEAKING: "#d03c3c",
  SPEAKING_NOT_AUDIBLE: "#e0b63a",
};

export interface Box {
  x1: number;
  y1: number;
  x2: number;
  y2: number;
}

export interface LabeledFrameRow {
  videoId: string;
  timestamp: number;
  box: Box;
  label: SpeakLabel;
  trackId: string;
}

/** Six-decimal fixed-point rendering, identical to the service side. */
export function formatFloat(v: number): string {
  return v.toFixed(6);
}

export function formatRow(row: LabeledFrameRow): string {
  const b = row.box;
  return [
    row.videoId,
    formatFloat(row.timestamp),
    formatFloat(b.x1),
    formatFloat(b.y1),
    formatFloat(b.x2),
    formatFloat(b.y2),
    row.label,
    row.trackId,
  ].join(",");
}

/** Canonical CSV: sorted by (video, track, timestamp), one trailing newline
 * per row. */
export function serializeRows(rows: readonly LabeledFrameRow[]): string {
  // Plain code-point string order (never locale-dependent) to match the
  // service's sort exactly.
  const cmp = (a: string, b: string) => (a < b ? -1 : a > b ? 1 : 0);
  const ordered = [...rows].sort(
    (a, b) =>
      cmp(a.videoId, b.videoId) || cmp(a.trackId, b.trackId) || a.timestamp - b.timestamp,
  );
  return ordered.map((r) => formatRow(r) + "\n").join("");
}
