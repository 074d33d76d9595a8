import assert from "node:assert/strict";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { test } from "node:test";
import { fileURLToPath } from "node:url";

import { JSDOM } from "jsdom";

import { ApiClient } from "../src/api.js";
import { mountApp } from "../src/view.js";
import { RatingTask } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const html = readFileSync(join(here, "..", "..", "public", "index.html"), "utf-8");

const HOSTILE_TASK: RatingTask = {
  item_id: "sys::q0",
  question: "<b>question</b> with markup",
  answer: "<img src=x onerror=\"window.__pwned = true\">",
  passage_title: "<script>window.__pwned = true</script>",
  passage_text: "Passage with <script>alert('xss')</script> & <i>tags</i>.",
  passage_url: "http://wiki/page",
  system: "sys",
  question_id: "q0",
};

function fetchFor(tasks: (RatingTask | null)[]) {
  return async (url: string): Promise<Response> => {
    if (url.includes("/api/next")) {
      const task = tasks.shift();
      if (task === null || task === undefined) {
        return new Response(null, { status: 204 });
      }
      return new Response(JSON.stringify(task), { status: 200 });
    }
    if (url.includes("/api/progress")) {
      return new Response(JSON.stringify({ items: 1, target_ratings: 5, completed: 0 }), {
        status: 200,
      });
    }
    return new Response(JSON.stringify({ status: "ok" }), { status: 200 });
  };
}

test("passage text renders as text, never as markup", async () => {
  const dom = new JSDOM(html, { runScripts: "outside-only" });
  const doc = dom.window.document;
  const api = new ApiClient("http://stub", fetchFor([HOSTILE_TASK]));
  const controller = mountApp(doc, api);
  await controller.start("r1");

  const passage = doc.getElementById("passage-text")!;
  assert.equal(passage.textContent, HOSTILE_TASK.passage_text);
  assert.equal(passage.querySelector("script"), null);
  assert.equal(passage.querySelector("i"), null);
  assert.equal(doc.getElementById("answer")!.querySelector("img"), null);
  assert.equal((dom.window as unknown as Record<string, unknown>).__pwned, undefined);
});

test("q2 buttons stay disabled until q1 is yes, submit gates on completeness", async () => {
  const dom = new JSDOM(html, { runScripts: "outside-only" });
  const doc = dom.window.document;
  const api = new ApiClient("http://stub", fetchFor([HOSTILE_TASK]));
  const controller = mountApp(doc, api);
  await controller.start("r1");

  const q2yes = doc.getElementById("q2-yes") as HTMLButtonElement;
  const submit = doc.getElementById("submit-btn") as HTMLButtonElement;
  assert.equal(q2yes.disabled, true);
  assert.equal(submit.disabled, true);

  (doc.getElementById("q1-yes") as HTMLButtonElement).click();
  assert.equal(q2yes.disabled, false);
  assert.equal(submit.disabled, true); // q2 not chosen yet

  q2yes.click();
  assert.equal(submit.disabled, false);

  (doc.getElementById("q1-no") as HTMLButtonElement).click();
  assert.equal(q2yes.disabled, true); // q2 reset and re-disabled
  assert.equal(submit.disabled, false); // q1=no alone is submittable
});

test("completion view appears after the queue drains", async () => {
  const dom = new JSDOM(html, { runScripts: "outside-only" });
  const doc = dom.window.document;
  const api = new ApiClient("http://stub", fetchFor([null]));
  const controller = mountApp(doc, api);
  await controller.start("r1");
  assert.equal(doc.getElementById("done-view")!.hidden, false);
  assert.equal(doc.getElementById("rating-view")!.hidden, true);
});
