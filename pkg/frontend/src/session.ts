/** One rater's editing session on one task: ties the timeline model to
 * the service client with optimistic versioning.
 *
 * Submission rules:
 *  - only when the timeline fully covers the track (`canSubmit`);
 *  - one in-flight submission at a time;
 *  - a version conflict is surfaced (`conflict`) and never silently
 *    overwrites — the caller either rebases onto the latest version and
 *    resubmits, or discards.
 */

import type { AnnotationClient, TaskDetail } from "./client.js";
import { ConflictError } from "./client.js";
import { TimelineModel } from "./timeline.js";

export type SubmitOutcome =
  | { kind: "accepted"; version: number }
  | { kind: "conflict"; currentVersion: number }
  | { kind: "blocked"; reason: string };

export class RatingSession {
  readonly task: TaskDetail;
  readonly raterId: string;
  readonly timeline: TimelineModel;
  /** Last version this session knows the service accepted for this rater. */
  version: number;
  pending = false;
  conflict: { currentVersion: number } | null = null;

  private constructor(
    private readonly client: AnnotationClient,
    task: TaskDetail,
    raterId: string,
  ) {
    this.task = task;
    this.raterId = raterId;
    this.timeline = new TimelineModel(task.start, task.end);
    this.version = task.versions[raterId] ?? 0;
  }

  static async open(
    client: AnnotationClient,
    taskId: string,
    raterId: string,
  ): Promise<RatingSession> {
    const task = await client.getTask(taskId);
    return new RatingSession(client, task, raterId);
  }

  get canSubmit(): boolean {
    return this.timeline.complete && !this.pending;
  }

  async submit(): Promise<SubmitOutcome> {
    if (this.pending) return { kind: "blocked", reason: "submission in flight" };
    if (!this.timeline.complete) {
      return { kind: "blocked", reason: "timeline has unlabeled gaps" };
    }
    this.pending = true;
    try {
      const accepted = await this.client.putSegments(
        this.task.task_id,
        this.raterId,
        this.version + 1,
        this.timeline.toWire(),
      );
      this.version = accepted;
      this.conflict = null;
      this.timeline.clearDirty();
      return { kind: "accepted", version: accepted };
    } catch (err) {
      if (err instanceof ConflictError) {
        this.conflict = { currentVersion: err.currentVersion };
        return { kind: "conflict", currentVersion: err.currentVersion };
      }
      throw err;
    } finally {
      this.pending = false;
    }
  }

  /** Resolve a conflict by rebasing onto the service's current version
   * and resubmitting this session's timeline. */
  async resubmitOverLatest(): Promise<SubmitOutcome> {
    if (!this.conflict) return { kind: "blocked", reason: "no conflict to resolve" };
    this.version = this.conflict.currentVersion;
    this.conflict = null;
    return this.submit();
  }
}
