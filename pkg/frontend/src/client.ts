/** Thin typed client for the annotation service HTTP API. The webapp
 * talks to the service exclusively through this module. */

import type { SpeakLabel } from "./labels.js";

export interface TaskSummary {
  task_id: string;
  video_id: string;
  status: "UNRATED" | "PARTIAL" | "COMPLETE";
  rater_count: number;
  versions: Record<string, number>;
}

export interface TaskDetail extends Omit<TaskSummary, "rater_count"> {
  start: number;
  end: number;
  media: Record<string, string>;
  envelope_rate: number;
  envelope: number[];
  frames: Array<{ timestamp: number; box: [number, number, number, number] }>;
}

export interface WireSegment {
  start: number;
  end: number;
  label: SpeakLabel;
}

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly detail: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

/** Optimistic-concurrency rejection: someone else advanced the version. */
export class ConflictError extends ServiceError {
  readonly currentVersion: number;

  constructor(status: number, message: string, currentVersion: number) {
    super(status, "CONFLICT", message, { current_version: currentVersion });
    this.currentVersion = currentVersion;
  }
}

async function raiseFor(response: Response): Promise<never> {
  let body: Record<string, unknown> = {};
  try {
    body = (await response.json()) as Record<string, unknown>;
  } catch {
    // non-JSON error body: fall through with the status line only
  }
  const code = typeof body.code === "string" ? body.code : "UNKNOWN";
  const message = typeof body.message === "string" ? body.message : response.statusText;
  if (code === "CONFLICT") {
    throw new ConflictError(response.status, message, Number(body.current_version ?? 0));
  }
  throw new ServiceError(response.status, code, message, body);
}

export class AnnotationClient {
  constructor(readonly baseUrl: string) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as T;
  }

  listTasks(status?: string): Promise<TaskSummary[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.getJson(`/tasks${query}`);
  }

  getTask(taskId: string): Promise<TaskDetail> {
    return this.getJson(`/tasks/${encodeURIComponent(taskId)}`);
  }

  async putSegments(
    taskId: string,
    raterId: string,
    version: number,
    segments: WireSegment[],
  ): Promise<number> {
    const response = await fetch(
      `${this.baseUrl}/tasks/${encodeURIComponent(taskId)}/raters/${encodeURIComponent(raterId)}/segments`,
      {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ version, segments }),
      },
    );
    if (!response.ok) await raiseFor(response);
    const body = (await response.json()) as { version: number };
    return body.version;
  }

  async exportCsv(taskIds: string[]): Promise<string> {
    const response = await fetch(
      `${this.baseUrl}/export?ids=${encodeURIComponent(taskIds.join(","))}`,
    );
    if (!response.ok) await raiseFor(response);
    return response.text();
  }

  agreement(
    taskIds: string[],
  ): Promise<{ kappa: number; n_raters: number; n_items: number }> {
    return this.getJson(`/agreement?ids=${encodeURIComponent(taskIds.join(","))}`);
  }
}
