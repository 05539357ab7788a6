/** End-to-end tests against the real annotation service.
 *
 * Spawns the Python service on a synthetic corpus in a temp directory,
 * then exercises the client/session layers over real HTTP:
 *  - submit-then-export must equal the CSV this client predicts, byte
 *    for byte;
 *  - two sessions on one rater slot must surface a conflict.
 */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { AnnotationClient, type TaskDetail } from "../src/client.js";
import { serializeRows, type LabeledFrameRow, type SpeakLabel } from "../src/labels.js";
import { RatingSession } from "../src/session.js";

const PYTHON = process.env.PYTHON ?? "python3";
const PORT = 8123 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let workdir: string;
let server: ChildProcess | null = null;
const client = new AnnotationClient(BASE);

function pythonAvailable(): boolean {
  return spawnSync(PYTHON, ["-c", "import asdkit"], { stdio: "ignore" }).status === 0;
}

async function waitForService(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      await client.listTasks();
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((r) => setTimeout(r, 250));
    }
  }
}

describe.skipIf(!pythonAvailable())("against the live annotation service", () => {
  beforeAll(async () => {
    workdir = mkdtempSync(join(tmpdir(), "annotator-it-"));
    const synth = spawnSync(
      PYTHON,
      ["-m", "asdkit.cli", "synth", "--n", "1", "--seed", "11",
       "--duration", "1.0", "--out", join(workdir, "corpus")],
      { stdio: "inherit" },
    );
    expect(synth.status).toBe(0);
    server = spawn(
      PYTHON,
      ["-c",
       `import uvicorn; from asdkit.service import build_app;` +
       `uvicorn.run(build_app(${JSON.stringify(join(workdir, "corpus/labels.csv"))},` +
       `${JSON.stringify(join(workdir, "corpus"))},` +
       `${JSON.stringify(join(workdir, "journal.jsonl"))}),` +
       `host="127.0.0.1", port=${PORT}, log_level="warning")`],
      { stdio: "inherit" },
    );
    await waitForService();
  }, 60_000);

  afterAll(() => {
    server?.kill();
    if (workdir) rmSync(workdir, { recursive: true, force: true });
  });

  /** The CSV the service should export for one rater's timeline: the
   * per-frame label under the painted segments, canonical formatting. */
  function predictedCsv(task: TaskDetail, session: RatingSession): string {
    const rows: LabeledFrameRow[] = task.frames.map((f) => {
      const clamped = Math.min(Math.max(f.timestamp, task.start), task.end);
      const label = session.timeline.labelAt(clamped) as SpeakLabel;
      const [x1, y1, x2, y2] = f.box;
      return {
        videoId: task.video_id,
        timestamp: f.timestamp,
        box: { x1, y1, x2, y2 },
        label,
        trackId: task.task_id,
      };
    });
    return serializeRows(rows);
  }

  it("lists the synthetic tasks as unrated", async () => {
    const tasks = await client.listTasks();
    expect(tasks.length).toBe(4);
    expect(tasks.every((t) => t.status === "UNRATED")).toBe(true);
  });

  it("submit-then-export equals the client-side canonical CSV", async () => {
    const tasks = await client.listTasks();
    const taskId = tasks[0]!.task_id;
    const session = await RatingSession.open(client, taskId, "it-rater");
    const { start, end } = session.task;
    const third = (end - start) / 3;
    session.timeline.paint(start, start + third, "NOT_SPEAKING");
    session.timeline.paint(start + third, start + 2 * third, "SPEAKING_AUDIBLE");
    session.timeline.paint(start + 2 * third, end, "SPEAKING_NOT_AUDIBLE");
    expect(session.canSubmit).toBe(true);

    const outcome = await session.submit();
    expect(outcome).toEqual({ kind: "accepted", version: 1 });
    expect(session.timeline.dirty).toBe(false);

    const exported = await client.exportCsv([taskId]);
    expect(exported).toBe(predictedCsv(session.task, session));
  });

  it("second session on the same rater slot gets a conflict, then resolves", async () => {
    const tasks = await client.listTasks();
    const taskId = tasks[1]!.task_id;
    const a = await RatingSession.open(client, taskId, "shared");
    const b = await RatingSession.open(client, taskId, "shared");
    a.timeline.paint(a.task.start, a.task.end, "SPEAKING_AUDIBLE");
    b.timeline.paint(b.task.start, b.task.end, "NOT_SPEAKING");

    expect((await a.submit()).kind).toBe("accepted");
    const clash = await b.submit();
    expect(clash).toEqual({ kind: "conflict", currentVersion: 1 });

    // the export still reflects session A until B explicitly resolves
    let exported = await client.exportCsv([taskId]);
    expect(exported).toContain("SPEAKING_AUDIBLE");
    expect(exported).not.toContain("NOT_SPEAKING,");

    expect(await b.resubmitOverLatest()).toEqual({ kind: "accepted", version: 2 });
    exported = await client.exportCsv([taskId]);
    expect(exported).not.toContain("SPEAKING_AUDIBLE");
  });

  it("rejects a submission with gaps via the service too", async () => {
    const tasks = await client.listTasks();
    const taskId = tasks[2]!.task_id;
    const session = await RatingSession.open(client, taskId, "gappy");
    const { start, end } = session.task;
    session.timeline.paint(start, start + (end - start) / 2, "NOT_SPEAKING");
    expect(session.canSubmit).toBe(false);
    expect((await session.submit()).kind).toBe("blocked");

    // bypass the local guard to confirm the service validates coverage
    await expect(
      client.putSegments(taskId, "gappy", 1, session.timeline.toWire()),
    ).rejects.toMatchObject({ code: "VALIDATION" });
  });
});
