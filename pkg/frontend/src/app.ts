/** DOM wiring: task picker, face-box viewer, waveform + label timelines,
 * brush painting, click-to-seek, keyboard shortcuts, submission with an
 * explicit conflict dialog. All state lives in the model classes; this
 * module only renders and forwards events. */

import { AnnotationClient, type TaskDetail } from "./client.js";
import { LABEL_COLORS, SPEAK_LABELS, type SpeakLabel } from "./labels.js";
import { PlayerState } from "./player.js";
import { RatingSession } from "./session.js";

const HELP_TEXT = `Label every moment of the track:
 - green: the face is speaking and you can hear it,
 - yellow: the face is visibly speaking but the speech is not in the soundtrack,
 - red: the face is not speaking.
Drag across the waveform with a label brush to paint; click either timeline to seek.
Space toggles playback; 1/2/3 set half, normal, and double speed; arrows step.
Submit activates once the whole track is labeled.`;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

export class AnnotatorApp {
  private session: RatingSession | null = null;
  private player: PlayerState | null = null;
  private readonly waveCanvas = el("canvas", { width: "900", height: "90" });
  private readonly labelCanvas = el("canvas", { width: "900", height: "24" });
  private readonly boxOverlay = el("div", { class: "face-box" });
  private readonly statusLine = el("div", { class: "status" });
  private readonly submitButton = el("button", {}, "Submit");
  private readonly conflictDialog = el("div", { class: "conflict hidden" });
  private dragStart: number | null = null;

  constructor(
    private readonly client: AnnotationClient,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    const tasks = await this.client.listTasks();
    const picker = el("select");
    for (const t of tasks) {
      picker.append(el("option", { value: t.task_id }, `${t.task_id} (${t.status})`));
    }
    picker.onchange = () => void this.openTask(picker.value);

    const palette = el("div", { class: "palette" });
    for (const label of SPEAK_LABELS) {
      const swatch = el("button", { style: `background:${LABEL_COLORS[label]}` }, label);
      swatch.onclick = () => {
        if (this.player) this.player.brush = label;
      };
      palette.append(swatch);
    }

    this.submitButton.onclick = () => void this.submit();
    this.waveCanvas.onmousedown = (e) => (this.dragStart = this.fractionOf(e));
    this.waveCanvas.onmouseup = (e) => this.finishPaint(e);
    this.labelCanvas.onclick = (e) => this.seekTo(e);
    this.waveCanvas.onclick = (e) => {
      if (this.dragStart === null) this.seekTo(e);
    };
    document.addEventListener("keydown", (e) => {
      if (this.player?.handleKey(e.key)) {
        e.preventDefault();
        this.render();
      }
    });

    this.root.append(
      picker,
      palette,
      this.boxOverlay,
      this.waveCanvas,
      this.labelCanvas,
      this.submitButton,
      this.statusLine,
      this.conflictDialog,
      el("details", {}, HELP_TEXT),
    );
    if (tasks.length > 0) await this.openTask(tasks[0]!.task_id);
  }

  private async openTask(taskId: string): Promise<void> {
    this.session = await RatingSession.open(this.client, taskId, "web");
    this.player = new PlayerState(this.session.task.start, this.session.task.end);
    this.render();
  }

  private fractionOf(e: MouseEvent): number {
    const rect = (e.currentTarget as HTMLCanvasElement).getBoundingClientRect();
    return Math.min(Math.max((e.clientX - rect.left) / rect.width, 0), 1);
  }

  private seekTo(e: MouseEvent): void {
    this.player?.seekFraction(this.fractionOf(e));
    this.render();
  }

  private finishPaint(e: MouseEvent): void {
    if (!this.session || !this.player || this.dragStart === null) return;
    const a = this.dragStart;
    const b = this.fractionOf(e);
    this.dragStart = null;
    if (a === b) return; // plain click: handled as a seek
    const span = this.player.duration;
    const from = this.player.start + Math.min(a, b) * span;
    const to = this.player.start + Math.max(a, b) * span;
    this.session.timeline.paint(from, to, this.player.brush);
    this.render();
  }

  private async submit(): Promise<void> {
    if (!this.session) return;
    const outcome = await this.session.submit();
    if (outcome.kind === "conflict") {
      this.conflictDialog.className = "conflict";
      this.conflictDialog.replaceChildren(
        el(
          "p",
          {},
          `Another session saved version ${outcome.currentVersion}. ` +
            "Resubmit your labels over it, or discard them.",
        ),
      );
      const resubmit = el("button", {}, "Resubmit mine");
      resubmit.onclick = () => void this.session?.resubmitOverLatest().then(() => this.render());
      const discard = el("button", {}, "Discard");
      discard.onclick = () => void this.openTask(this.session!.task.task_id);
      this.conflictDialog.append(resubmit, discard);
    }
    this.render();
  }

  private render(): void {
    if (!this.session || !this.player) return;
    const task: TaskDetail = this.session.task;
    const span = task.end - task.start;

    const wave = this.waveCanvas.getContext("2d")!;
    wave.clearRect(0, 0, this.waveCanvas.width, this.waveCanvas.height);
    const mid = this.waveCanvas.height / 2;
    const peak = Math.max(...task.envelope, 1e-6);
    task.envelope.forEach((v, i) => {
      const x = (i / task.envelope.length) * this.waveCanvas.width;
      const h = (v / peak) * mid;
      const t = task.start + (i / task.envelope.length) * span;
      wave.fillStyle = this.colorAt(t) ?? "#888";
      wave.fillRect(x, mid - h, Math.max(this.waveCanvas.width / task.envelope.length, 1), 2 * h);
    });
    const cursorX = ((this.player.currentTime - task.start) / span) * this.waveCanvas.width;
    wave.fillStyle = "#000";
    wave.fillRect(cursorX, 0, 1, this.waveCanvas.height);

    const bar = this.labelCanvas.getContext("2d")!;
    bar.fillStyle = "#ddd";
    bar.fillRect(0, 0, this.labelCanvas.width, this.labelCanvas.height);
    for (const seg of this.session.timeline.segments) {
      bar.fillStyle = LABEL_COLORS[seg.label];
      const x = ((seg.start - task.start) / span) * this.labelCanvas.width;
      const w = ((seg.end - seg.start) / span) * this.labelCanvas.width;
      bar.fillRect(x, 0, w, this.labelCanvas.height);
    }

    this.boxOverlay.style.borderColor = this.colorAt(this.player.currentTime) ?? "#888";
    this.submitButton.disabled = !this.session.canSubmit;
    this.statusLine.textContent =
      `${task.task_id} · v${this.session.version}` +
      `${this.session.timeline.dirty ? " · unsaved" : ""}` +
      ` · rate ${this.player.rate}x · t=${this.player.currentTime.toFixed(2)}s`;
    if (!this.session.conflict) this.conflictDialog.className = "conflict hidden";
  }

  /** Box-overlay / waveform color at a time instant: the label's color,
   * matching the segment underneath. */
  private colorAt(t: number): string | null {
    const label: SpeakLabel | null = this.session?.timeline.labelAt(t) ?? null;
    return label ? LABEL_COLORS[label] : null;
  }
}

export function mount(baseUrl: string, root: HTMLElement): Promise<void> {
  return new AnnotatorApp(new AnnotationClient(baseUrl), root).start();
}
