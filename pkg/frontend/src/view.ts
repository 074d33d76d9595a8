import { ApiClient } from "./api.js";
import { RatingController, View } from "./controller.js";
import { UiState, q2Enabled, submitEnabled } from "./state.js";

/**
 * Thin DOM layer. All task fields are written through textContent, so
 * passage text is displayed as text and never interpreted as markup.
 */
export class DomView implements View {
  constructor(private readonly doc: Document) {}

  private el<T extends HTMLElement>(id: string): T {
    const node = this.doc.getElementById(id);
    if (!node) {
      throw new Error(`missing element #${id}`);
    }
    return node as T;
  }

  render(state: UiState): void {
    this.el("enter-id-view").hidden = state.phase !== "enter_id";
    this.el("rating-view").hidden = state.phase !== "rating";
    this.el("done-view").hidden = state.phase !== "done";
    this.el("loading-view").hidden = state.phase !== "loading";

    const banner = this.el("error-banner");
    banner.hidden = state.errorMessage === null;
    this.el("error-text").textContent = state.errorMessage ?? "";

    if (state.progress) {
      const { completed, target_ratings } = state.progress;
      this.el("progress").textContent = `${completed} / ${target_ratings} ratings`;
    }

    if (state.phase === "rating" && state.task) {
      const task = state.task;
      this.el("question").textContent = task.question;
      this.el("answer").textContent = task.answer;
      this.el("passage-title").textContent = task.passage_title;
      this.el("passage-text").textContent = task.passage_text;
      const link = this.el<HTMLAnchorElement>("passage-link");
      link.href = task.passage_url;
      link.textContent = task.passage_url;

      this.setChoice("q1", state.q1);
      this.setChoice("q2", state.q2);
      const q2Active = q2Enabled(state);
      this.el<HTMLButtonElement>("q2-yes").disabled = !q2Active;
      this.el<HTMLButtonElement>("q2-no").disabled = !q2Active;
      this.el("q2-block").classList.toggle("disabled", !q2Active);
      this.el<HTMLButtonElement>("submit-btn").disabled = !submitEnabled(state);
    }
  }

  private setChoice(prefix: string, value: string): void {
    this.el(`${prefix}-yes`).classList.toggle("selected", value === "yes");
    this.el(`${prefix}-no`).classList.toggle("selected", value === "no");
  }
}

export function mountApp(doc: Document, api: ApiClient): RatingController {
  const view = new DomView(doc);
  const controller = new RatingController(api, view);

  const on = (id: string, handler: () => void) => {
    const node = doc.getElementById(id);
    if (!node) {
      throw new Error(`missing element #${id}`);
    }
    node.addEventListener("click", handler);
  };

  on("start-btn", () => {
    const input = doc.getElementById("rater-input") as HTMLInputElement;
    void controller.start(input.value);
  });
  on("q1-yes", () => controller.answerQ1("yes"));
  on("q1-no", () => controller.answerQ1("no"));
  on("q2-yes", () => controller.answerQ2("yes"));
  on("q2-no", () => controller.answerQ2("no"));
  on("submit-btn", () => void controller.submit());
  on("retry-btn", () => void controller.retry());

  doc.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && target.tagName === "INPUT") {
      return; // typing the rater id
    }
    void controller.handleKey((event as KeyboardEvent).key);
  });

  controller.state = { ...controller.state };
  view.render(controller.state);
  return controller;
}
