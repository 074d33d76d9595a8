import assert from "node:assert/strict";
import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { createServer } from "node:net";
import { after, before, test } from "node:test";

import { ApiClient } from "../src/api.js";
import { RatingController, View } from "../src/controller.js";
import { UiState } from "../src/state.js";

/** Round trip against the real rating service: two simulated raters complete
 * ten items through the UI controller; the exported log must score exactly
 * the hand-computed majority-vote value. */

const N_ITEMS = 10;

type Judgment = { q1: "yes" | "no"; q2?: "yes" | "no" };

const RATER_A: Record<string, Judgment> = {};
const RATER_B: Record<string, Judgment> = {};
for (let i = 0; i < N_ITEMS; i++) {
  const id = `ui-sys::q${String(i).padStart(2, "0")}`;
  RATER_A[id] =
    i <= 5 ? { q1: "yes", q2: "yes" } : i <= 7 ? { q1: "yes", q2: "no" } :
    i === 8 ? { q1: "no" } : { q1: "yes", q2: "yes" };
  RATER_B[id] =
    i <= 3 ? { q1: "yes", q2: "yes" } : i === 4 ? { q1: "no" } :
    i === 5 ? { q1: "yes", q2: "no" } : i === 6 ? { q1: "yes", q2: "yes" } :
    i === 7 ? { q1: "no" } : { q1: "yes", q2: "yes" };
}
// attributable = strict majority of 2 raters = both (yes, yes):
// q00..q03 and q09 -> 5 of 10 items -> 50.0
const EXPECTED_AIS = 50.0;

class SilentView implements View {
  render(_state: UiState): void {}
}

let workdir: string;
let service: ChildProcess | null = null;
let base = "";
let runPath = "";

function jsonl(rows: object[]): string {
  return rows.map((row) => JSON.stringify(row)).join("\n") + "\n";
}

async function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const address = probe.address();
      if (address === null || typeof address === "string") {
        reject(new Error("no port"));
        return;
      }
      probe.close(() => resolve(address.port));
    });
  });
}

before(async () => {
  workdir = mkdtempSync(join(tmpdir(), "rating-ui-"));
  const corpusRows = [];
  const runRows: object[] = [
    {
      run: "ui-sys",
      config: {
        architecture: "rtr", retrieval: "bm25", k: 1, passages_to_generator: 1,
        attribution: "top1", exemplar_policy: "nq64_random", exemplar_count: 64,
        seed: 0, rerank: false, train_passages: null,
      },
      config_hash: "0000000000000000",
    },
  ];
  for (let i = 0; i < N_ITEMS; i++) {
    const qid = `q${String(i).padStart(2, "0")}`;
    corpusRows.push({
      id: `p${i}`,
      url: `http://wiki/page${i}`,
      title: `Page ${i}`,
      text: `supporting passage number ${i} with the fact`,
    });
    runRows.push({
      question_id: qid,
      question: `question number ${i}`,
      answer: `fact ${i}`,
      selection_mode: "top1",
      answer_found_in_passage: true,
      passage_id: `p${i}`,
    });
  }
  const corpusPath = join(workdir, "corpus.jsonl");
  runPath = join(workdir, "run.jsonl");
  writeFileSync(corpusPath, jsonl(corpusRows));
  writeFileSync(runPath, jsonl(runRows));

  const port = await freePort();
  base = `http://127.0.0.1:${port}`;
  service = spawn(
    "python3",
    ["-m", "attriqa.cli", "serve", "--run", runPath, "--corpus", corpusPath,
     "--port", String(port), "--log", join(workdir, "log.jsonl"), "--target", "2"],
    { stdio: ["ignore", "pipe", "pipe"] }
  );
  const deadline = Date.now() + 15_000;
  for (;;) {
    try {
      const response = await fetch(`${base}/api/progress`);
      if (response.ok) {
        break;
      }
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("rating service never came up");
    }
    await new Promise((resolve) => setTimeout(resolve, 100));
  }
});

after(() => {
  if (service && service.exitCode === null) {
    service.kill("SIGTERM");
  }
});

async function completeQueue(raterId: string, plan: Record<string, Judgment>): Promise<number> {
  const controller = new RatingController(new ApiClient(base), new SilentView());
  await controller.start(raterId);
  let submitted = 0;
  while (controller.state.phase === "rating") {
    const task = controller.state.task;
    assert.ok(task, "rating phase must carry a task");
    const judgment = plan[task.item_id];
    assert.ok(judgment, `no scripted judgment for ${task.item_id}`);
    controller.answerQ1(judgment.q1);
    if (judgment.q2 !== undefined) {
      controller.answerQ2(judgment.q2);
    }
    assert.equal(controller.canSubmit(), true);
    await controller.submit();
    assert.equal(controller.state.errorMessage, null);
    submitted += 1;
    assert.ok(submitted <= N_ITEMS + 1, "queue did not drain");
  }
  assert.equal(controller.state.phase, "done");
  return submitted;
}

test("two raters complete the queue through the UI controller", async () => {
  assert.equal(await completeQueue("rater-a", RATER_A), N_ITEMS);
  assert.equal(await completeQueue("rater-b", RATER_B), N_ITEMS);
  const progress = await (await fetch(`${base}/api/progress`)).json();
  assert.deepEqual(progress, { items: N_ITEMS, target_ratings: 20, completed: 20 });
});

test("export scores exactly the hand-computed majority vote", async () => {
  const body = await (await fetch(`${base}/api/export`)).text();
  const records = body.trim().split("\n").map((line) => JSON.parse(line));
  assert.equal(records.length, 2 * N_ITEMS);

  // hand recomputation from the export itself
  const byItem = new Map<string, { interpretable: boolean; supported: boolean }[]>();
  for (const record of records) {
    const list = byItem.get(record.question_id) ?? [];
    list.push(record);
    byItem.set(record.question_id, list);
  }
  let attributable = 0;
  for (const votes of byItem.values()) {
    const yes = votes.filter((vote) => vote.interpretable && vote.supported).length;
    if (yes * 2 > votes.length) {
      attributable += 1;
    }
  }
  const handValue = (100 * attributable) / byItem.size;
  assert.equal(handValue, EXPECTED_AIS);

  // the evaluation stack must agree with the hand value on the same export
  const exportPath = join(workdir, "export.jsonl");
  writeFileSync(exportPath, body);
  const script = [
    "import sys",
    "from attriqa.metrics import load_ratings, ais_score",
    "from attriqa.pipelines import read_run",
    "run = read_run(sys.argv[1])",
    "ratings = load_ratings(sys.argv[2])",
    "percent, se, ci = ais_score(run, ratings, resamples=1000, seed=0)",
    "print(percent)",
  ].join("\n");
  const stdout = execFileSync("python3", ["-c", script, runPath, exportPath]).toString();
  assert.equal(parseFloat(stdout), EXPECTED_AIS);
});

test("the UI cannot emit (interpretable=false, supported=true)", async () => {
  const controller = new RatingController(new ApiClient(base), new SilentView());
  await controller.start("rater-c");
  assert.equal(controller.state.phase, "rating");
  controller.answerQ1("no");
  controller.answerQ2("yes"); // disabled control: must be ignored
  assert.equal(controller.state.q2, "unset");
  const before = await (await fetch(`${base}/api/progress`)).json();
  await controller.submit(); // goes through as (false, false)
  const logged = await (await fetch(`${base}/api/export`)).text();
  const mine = logged.trim().split("\n").map((l) => JSON.parse(l))
    .filter((r) => r.rater_id === "rater-c");
  assert.equal(mine.length, 1);
  assert.equal(mine[0].interpretable, false);
  assert.equal(mine[0].supported, false);
  assert.ok(before); // progress endpoint stayed healthy throughout

  // and the server independently rejects the forbidden pair
  const response = await fetch(`${base}/api/rating`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({
      rater: "rater-c", item_id: "ui-sys::q01", interpretable: false, supported: true,
    }),
  });
  assert.equal(response.status, 422);
});
