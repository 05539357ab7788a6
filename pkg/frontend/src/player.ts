/** Playback state: time cursor, play/pause, speed, and the active label
 * brush. Keyboard handling is navigation-only — it never touches the
 * timeline model. */

import type { SpeakLabel } from "./labels.js";

export const PLAYBACK_RATES = [0.5, 1, 2] as const;
export type PlaybackRate = (typeof PLAYBACK_RATES)[number];

const SEEK_STEP_S = 0.5;

export class PlayerState {
  readonly start: number;
  readonly end: number;
  playing = false;
  rate: PlaybackRate = 1;
  currentTime: number;
  brush: SpeakLabel = "SPEAKING_AUDIBLE";

  constructor(start: number, end: number) {
    if (!(end > start)) throw new RangeError(`empty track span [${start}, ${end}]`);
    this.start = start;
    this.end = end;
    this.currentTime = start;
  }

  get duration(): number {
    return this.end - this.start;
  }

  /** Jump to an absolute track time, clamped to the span. */
  seek(t: number): void {
    this.currentTime = Math.min(Math.max(t, this.start), this.end);
  }

  /** Click-to-seek: fraction 0..1 of either rendered timeline maps
   * proportionally onto the track span. */
  seekFraction(fraction: number): void {
    this.seek(this.start + Math.min(Math.max(fraction, 0), 1) * this.duration);
  }

  /** Documented app shortcuts. Returns true when the key was handled.
   * Every binding is navigation-only by design. */
  handleKey(key: string): boolean {
    switch (key) {
      case " ":
        this.playing = !this.playing;
        return true;
      case "ArrowLeft":
        this.seek(this.currentTime - SEEK_STEP_S);
        return true;
      case "ArrowRight":
        this.seek(this.currentTime + SEEK_STEP_S);
        return true;
      case "1":
        this.rate = 0.5;
        return true;
      case "2":
        this.rate = 1;
        return true;
      case "3":
        this.rate = 2;
        return true;
      case "Home":
        this.seek(this.start);
        return true;
      case "End":
        this.seek(this.end);
        return true;
      default:
        return false;
    }
  }
}
