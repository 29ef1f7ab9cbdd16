/** HTTP client for the inference service. Keeps the raw response text so the
 * UI can display numbers byte-identical to the wire format. */

export interface ModelInfo {
  model_id: string;
  engine: string;
  d: number;
  file: string;
}

export interface HealthInfo {
  status: string;
  model_id: string | null;
}

export interface ClassifyOutcome {
  ok: boolean;
  status: number;
  rawText: string;
  json: any;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async health(): Promise<HealthInfo> {
    const r = await this.fetchImpl(`${this.baseUrl}/health`);
    return (await r.json()) as HealthInfo;
  }

  async models(): Promise<ModelInfo[]> {
    const r = await this.fetchImpl(`${this.baseUrl}/models`);
    const doc = await r.json();
    return (doc.models ?? []) as ModelInfo[];
  }

  async classify(form: FormData, signal?: AbortSignal): Promise<ClassifyOutcome> {
    const r = await this.fetchImpl(`${this.baseUrl}/classify`, {
      method: "POST",
      body: form,
      signal,
    });
    const rawText = await r.text();
    let json: any = null;
    try {
      json = JSON.parse(rawText);
    } catch {
      json = null;
    }
    return { ok: r.ok, status: r.status, rawText, json };
  }
}

export async function loadConfig(fetchImpl: FetchLike = (i, init) => fetch(i, init)): Promise<{ apiBaseUrl: string }> {
  try {
    const r = await fetchImpl("./config.json");
    const doc = await r.json();
    if (typeof doc.apiBaseUrl === "string") return doc;
  } catch {
    /* fall through to default */
  }
  return { apiBaseUrl: "http://127.0.0.1:8787" };
}
