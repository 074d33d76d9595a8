export class ApiClient {
    constructor(baseUrl = "", fetchImpl = (...args) => fetch(...args)) {
        this.base = baseUrl.replace(/\/$/, "");
        this.fetchImpl = fetchImpl;
    }
    /** Next task for this rater, or null when everything is rated (204). */
    async next(rater) {
        const response = await this.fetchImpl(`${this.base}/api/next?rater=${encodeURIComponent(rater)}`);
        if (response.status === 204) {
            return null;
        }
        if (!response.ok) {
            throw new Error(`next: HTTP ${response.status}`);
        }
        return (await response.json());
    }
    /** Submit one judgment; 409/422 come back as structured failures. */
    async submit(payload) {
        const response = await this.fetchImpl(`${this.base}/api/rating`, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
        if (response.ok) {
            return { ok: true };
        }
        let error = `HTTP ${response.status}`;
        try {
            const body = (await response.json());
            if (body.error) {
                error = body.error;
            }
        }
        catch {
            // non-JSON error body: keep the status text
        }
        return { ok: false, status: response.status, error };
    }
    async progress() {
        const response = await this.fetchImpl(`${this.base}/api/progress`);
        if (!response.ok) {
            throw new Error(`progress: HTTP ${response.status}`);
        }
        return (await response.json());
    }
}
