/** Upload state machine: slot filling, model selection, submit gating, and
 * request sequencing (only the latest in-flight response is rendered). */
export const VIEW_NAMES = ["frontal", "left", "right"];
export function initialState() {
    return {
        slots: { frontal: null, left: null, right: null },
        models: [],
        selectedModel: null,
        serviceStatus: "unknown",
        lastResponse: null,
        errorBanner: null,
    };
}
export function setSlot(state, view, file) {
    return { ...state, slots: { ...state.slots, [view]: file } };
}
export function setModels(state, models) {
    const selected = state.selectedModel && models.some((m) => m.model_id === state.selectedModel)
        ? state.selectedModel
        : models.length > 0
            ? models[0].model_id
            : null;
    return { ...state, models, selectedModel: selected };
}
export function setServiceStatus(state, status) {
    return { ...state, serviceStatus: status };
}
export function selectModel(state, modelId) {
    return { ...state, selectedModel: modelId };
}
/** Classify is allowed only with all three slots filled and a model chosen. */
export function canSubmit(state) {
    return (VIEW_NAMES.every((v) => state.slots[v] !== null) &&
        state.selectedModel !== null);
}
export function pickerDisabled(state) {
    return state.models.length === 0;
}
export function pickerHint(state) {
    return state.models.length === 0 ? "no models available - train a checkpoint first" : null;
}
/** Serializes submissions: a resubmit aborts the in-flight request, and a
 * stale response (an earlier submission resolving late) is never applied. */
export class Submitter {
    constructor() {
        this.seq = 0;
        this.controller = null;
    }
    async submit(api, state) {
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
            form.append(view, state.slots[view], `${view}.png`);
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
        }
        catch (err) {
            if (myTicket !== this.seq || err?.name === "AbortError") {
                return { applied: false };
            }
            return { applied: false, error: "network failure - retry" };
        }
    }
}
