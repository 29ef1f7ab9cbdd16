/** Upload state machine: slot filling, model selection, submit gating, and
 * request sequencing (only the latest in-flight response is rendered). */

import { ApiClient, ClassifyOutcome, ModelInfo } from "./api.js";

export type ViewName = "frontal" | "left" | "right";
export const VIEW_NAMES: ViewName[] = ["frontal", "left", "right"];

export type ServiceStatus = "unknown" | "ok" | "no-model" | "down";

export interface UploadState {
  slots: Record<ViewName, Blob | null>;
  models: ModelInfo[];
  selectedModel: string | null;
  serviceStatus: ServiceStatus;
  lastResponse: ClassifyOutcome | null;
  errorBanner: string | null;
}

export function initialState(): UploadState {
  return {
    slots: { frontal: null, left: null, right: null },
    models: [],
    selectedModel: null,
    serviceStatus: "unknown",
    lastResponse: null,
    errorBanner: null,
  };
}

export function setSlot(state: UploadState, view: ViewName, file: Blob | null): UploadState {
  return { ...state, slots: { ...state.slots, [view]: file } };
}

export function setModels(state: UploadState, models: ModelInfo[]): UploadState {
  const selected =
    state.selectedModel && models.some((m) => m.model_id === state.selectedModel)
      ? state.selectedModel
      : models.length > 0
        ? models[0].model_id
        : null;
  return { ...state, models, selectedModel: selected };
}

export function setServiceStatus(state: UploadState, status: ServiceStatus): UploadState {
  return { ...state, serviceStatus: status };
}

export function selectModel(state: UploadState, modelId: string): UploadState {
  return { ...state, selectedModel: modelId };
}

/** Classify is allowed only with all three slots filled and a model chosen. */
export function canSubmit(state: UploadState): boolean {
  return (
    VIEW_NAMES.every((v) => state.slots[v] !== null) &&
    state.selectedModel !== null
  );
}

export function pickerDisabled(state: UploadState): boolean {
  return state.models.length === 0;
}

export function pickerHint(state: UploadState): string | null {
  return state.models.length === 0 ? "no models available - train a checkpoint first" : null;
}

export interface SubmitResult {
  applied: boolean;
  outcome?: ClassifyOutcome;
  error?: string;
}

/** Serializes submissions: a resubmit aborts the in-flight request, and a
 * stale response (an earlier submission resolving late) is never applied. */
export class Submitter {
  private seq = 0;
  private controller: AbortController | null = null;

  async submit(api: ApiClient, state: UploadState): Promise<SubmitResult> {
    if (!canSubmit(state)) {
      return { applied: false, error: "fill all three views and pick a model" };
    }
    this.seq += 1;
    const myTicket = this.seq;
    if (this.controller) {
      this.controller.abort();
    }
    this.controller = new AbortController();

    const form = new FormData();
    for (const view of VIEW_NAMES) {
      form.append(view, state.slots[view] as Blob, `${view}.png`);
    }
    if (state.selectedModel) {
      form.append("model", state.selectedModel);
    }

    try {
      const outcome = await api.classify(form, this.controller.signal);
      if (myTicket !== this.seq) {
        return { applied: false }; // a newer submission superseded this one
      }
      return { applied: true, outcome };
    } catch (err: any) {
      if (myTicket !== this.seq || err?.name === "AbortError") {
        return { applied: false };
      }
      return { applied: false, error: "network failure - retry" };
    }
  }
}
