"use strict";
/** HTTP client for the inference service. Keeps the raw response text so the
 * UI can display numbers byte-identical to the wire format. */
Object.defineProperty(exports, "__esModule", { value: true });
exports.ApiClient = void 0;
exports.loadConfig = loadConfig;
class ApiClient {
    constructor(baseUrl, fetchImpl = (input, init) => fetch(input, init)) {
        this.baseUrl = baseUrl;
        this.fetchImpl = fetchImpl;
    }
    async health() {
        const r = await this.fetchImpl(`${this.baseUrl}/health`);
        return (await r.json());
    }
    async models() {
        const r = await this.fetchImpl(`${this.baseUrl}/models`);
        const doc = await r.json();
        return (doc.models ?? []);
    }
    async classify(form, signal) {
        const r = await this.fetchImpl(`${this.baseUrl}/classify`, {
            method: "POST",
            body: form,
            signal,
        });
        const rawText = await r.text();
        let json = null;
        try {
            json = JSON.parse(rawText);
        }
        catch {
            json = null;
        }
        return { ok: r.ok, status: r.status, rawText, json };
    }
}
exports.ApiClient = ApiClient;
async function loadConfig(fetchImpl = (i, init) => fetch(i, init)) {
    try {
        const r = await fetchImpl("./config.json");
        const doc = await r.json();
        if (typeof doc.apiBaseUrl === "string")
            return doc;
    }
    catch {
        /* fall through to default */
    }
    return { apiBaseUrl: "http://127.0.0.1:8787" };
}
