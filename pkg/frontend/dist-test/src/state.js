"use strict";
/** Upload state machine: slot filling, model selection, submit gating, and
 * request sequencing (only the latest in-flight response is rendered). */
Object.defineProperty(exports, "__esModule", { value: true });
exports.Submitter = exports.VIEW_NAMES = void 0;
exports.initialState = initialState;
exports.setSlot = setSlot;
exports.setModels = setModels;
exports.setServiceStatus = setServiceStatus;
exports.selectModel = selectModel;
exports.canSubmit = canSubmit;
exports.pickerDisabled = pickerDisabled;
exports.pickerHint = pickerHint;
exports.VIEW_NAMES = ["frontal", "left", "right"];
function initialState() {
    return {
        slots: { frontal: null, left: null, right: null },
        models: [],
        selectedModel: null,
        serviceStatus: "unknown",
        lastResponse: null,
        errorBanner: null,
    };
}
function setSlot(state, view, file) {
    return { ...state, slots: { ...state.slots, [view]: file } };
}
function setModels(state, models) {
    const selected = state.selectedModel && models.some((m) => m.model_id === state.selectedModel)
        ? state.selectedModel
        : models.length > 0
            ? models[0].model_id
            : null;
    return { ...state, models, selectedModel: selected };
}
function setServiceStatus(state, status) {
    return { ...state, serviceStatus: status };
}
function selectModel(state, modelId) {
    return { ...state, selectedModel: modelId };
}
/** Classify is allowed only with all three slots filled and a model chosen. */
function canSubmit(state) {
    return (exports.VIEW_NAMES.every((v) => state.slots[v] !== null) &&
        state.selectedModel !== null);
}
function pickerDisabled(state) {
    return state.models.length === 0;
}
function pickerHint(state) {
    return state.models.length === 0 ? "no models available - train a checkpoint first" : null;
}
/** Serializes submissions: a resubmit aborts the in-flight request, and a
 * stale response (an earlier submission resolving late) is never applied. */
class Submitter {
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
        for (const view of exports.VIEW_NAMES) {
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
exports.Submitter = Submitter;
