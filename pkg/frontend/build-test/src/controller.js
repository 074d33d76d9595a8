import { buildPayload, initialState, q2Enabled, setQ1, setQ2, submitEnabled, withTask, } from "./state.js";
/**
 * Drives the rating queue: fetch a task, collect the two answers, submit,
 * advance. Failures surface as a banner without losing the current answers;
 * what Retry does depends on what failed (refetch, resubmit, or move on).
 */
export class RatingController {
    constructor(api, view) {
        this.api = api;
        this.view = view;
        this.state = initialState();
        this.lastError = null;
    }
    update(next) {
        this.state = next;
        this.view.render(this.state);
    }
    fail(kind, message) {
        this.lastError = kind;
        this.update({ ...this.state, errorMessage: message });
    }
    async start(raterId) {
        const trimmed = raterId.trim();
        if (!trimmed) {
            this.fail("local", "enter a rater id");
            return;
        }
        this.update({ ...this.state, raterId: trimmed, phase: "loading", errorMessage: null });
        await this.fetchNext();
    }
    async fetchNext() {
        try {
            const [task, progress] = await Promise.all([
                this.api.next(this.state.raterId),
                this.api.progress(),
            ]);
            this.lastError = null;
            if (task === null) {
                this.update({ ...this.state, phase: "done", task: null, progress, errorMessage: null });
            }
            else {
                this.update({ ...withTask(this.state, task), progress });
            }
        }
        catch {
            // keep whatever is on screen; offer retry
            this.fail("network_fetch", "network failure, retry");
        }
    }
    async retry() {
        const kind = this.lastError;
        this.lastError = null;
        switch (kind) {
            case "network_fetch":
            case "conflict":
                await this.fetchNext();
                return;
            case "network_submit":
                this.update({ ...this.state, errorMessage: null });
                await this.submit();
                return;
            default:
                this.update({ ...this.state, errorMessage: null });
        }
    }
    answerQ1(value) {
        this.update(setQ1(this.state, value));
    }
    answerQ2(value) {
        this.update(setQ2(this.state, value));
    }
    canSubmit() {
        return submitEnabled(this.state);
    }
    async submit() {
        if (!this.canSubmit()) {
            return;
        }
        const payload = buildPayload(this.state);
        let result;
        try {
            result = await this.api.submit(payload);
        }
        catch {
            this.fail("network_submit", "network failure, retry");
            return;
        }
        if (!result.ok) {
            // 409: this item is already rated by this rater; Retry moves on.
            // anything else: the judgment itself was refused; answers stay put.
            this.fail(result.status === 409 ? "conflict" : "validation", result.error);
            return;
        }
        this.lastError = null;
        await this.fetchNext();
    }
    /** Keyboard shortcuts: 1/2 answer the active question, Enter submits. */
    async handleKey(key) {
        if (this.state.phase !== "rating") {
            return;
        }
        if (key === "1" || key === "2") {
            const value = key === "1" ? "yes" : "no";
            if (this.state.q1 === "unset" || !q2Enabled(this.state)) {
                this.answerQ1(value);
            }
            else {
                this.answerQ2(value);
            }
            return;
        }
        if (key === "Enter") {
            await this.submit();
        }
    }
}
