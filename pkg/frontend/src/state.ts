/**
 * Pure UI state for the two-question rating flow.
 *
 * Invariants enforced here, at the control level:
 *  - the support question (Q2) is disabled unless interpretability (Q1) is
 *    answered "yes";
 *  - submit is enabled only when Q1 is "no", or Q1 is "yes" and Q2 is set;
 *  - a payload of (interpretable=false, supported=true) cannot be built.
 */

import { Progress, RatingPayload, RatingTask } from "./types.js";

export type Answer = "yes" | "no" | "unset";

export type Phase = "enter_id" | "loading" | "rating" | "done";

export interface UiState {
  raterId: string;
  phase: Phase;
  task: RatingTask | null;
  q1: Answer;
  q2: Answer;
  errorMessage: string | null; // retry/inline banner; state otherwise preserved
  progress: Progress | null;
}

export function initialState(): UiState {
  return {
    raterId: "",
    phase: "enter_id",
    task: null,
    q1: "unset",
    q2: "unset",
    errorMessage: null,
    progress: null,
  };
}

export function q2Enabled(state: UiState): boolean {
  return state.phase === "rating" && state.q1 === "yes";
}

export function submitEnabled(state: UiState): boolean {
  if (state.phase !== "rating" || state.task === null) {
    return false;
  }
  return state.q1 === "no" || (state.q1 === "yes" && state.q2 !== "unset");
}

export function withTask(state: UiState, task: RatingTask): UiState {
  return { ...state, phase: "rating", task, q1: "unset", q2: "unset", errorMessage: null };
}

export function setQ1(state: UiState, value: "yes" | "no"): UiState {
  if (state.phase !== "rating") {
    return state;
  }
  // changing Q1 resets Q2: a stale support answer must not survive
  return { ...state, q1: value, q2: "unset" };
}

export function setQ2(state: UiState, value: "yes" | "no"): UiState {
  if (!q2Enabled(state)) {
    return state; // disabled control: ignore
  }
  return { ...state, q2: value };
}

export function buildPayload(state: UiState): RatingPayload {
  if (!submitEnabled(state) || state.task === null) {
    throw new Error("submit is not enabled");
  }
  if (state.q1 === "no") {
    // an uninterpretable response cannot be supported
    return {
      rater: state.raterId,
      item_id: state.task.item_id,
      interpretable: false,
      supported: false,
    };
  }
  return {
    rater: state.raterId,
    item_id: state.task.item_id,
    interpretable: true,
    supported: state.q2 === "yes",
  };
}
