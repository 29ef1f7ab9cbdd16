"use strict";
/** DOM wiring: three upload slots, model picker, health badge, classify
 * button, probability bars, per-view labels. All numbers rendered come from
 * render.ts raw substrings. */
Object.defineProperty(exports, "__esModule", { value: true });
const api_js_1 = require("./api.js");
const render_js_1 = require("./render.js");
const state_js_1 = require("./state.js");
let state = (0, state_js_1.initialState)();
let api;
const submitter = new state_js_1.Submitter();
function $(id) {
    const el = document.getElementById(id);
    if (!el)
        throw new Error(`missing element #${id}`);
    return el;
}
function update(next) {
    state = next;
    sync();
}
function sync() {
    const btn = $("classify");
    btn.disabled = !(0, state_js_1.canSubmit)(state);
    const badge = $("health");
    badge.textContent = state.serviceStatus;
    badge.className = `badge ${state.serviceStatus === "ok" ? "ok" : "bad"}`;
    const picker = $("models");
    picker.disabled = (0, state_js_1.pickerDisabled)(state);
    const hint = (0, state_js_1.pickerHint)(state);
    $("picker-hint").textContent = hint ?? "";
    const banner = $("error-banner");
    banner.textContent = state.errorBanner ?? "";
    banner.style.display = state.errorBanner ? "block" : "none";
}
function refreshPicker() {
    const picker = $("models");
    picker.innerHTML = "";
    for (const m of state.models) {
        const opt = document.createElement("option");
        opt.value = m.model_id;
        opt.textContent = `${m.model_id} (${m.engine}, d=${m.d})`;
        if (m.model_id === state.selectedModel)
            opt.selected = true;
        picker.appendChild(opt);
    }
}
function wireSlot(view) {
    const input = $(`file-${view}`);
    const drop = $(`slot-${view}`);
    input.addEventListener("change", () => {
        update((0, state_js_1.setSlot)(state, view, input.files && input.files[0] ? input.files[0] : null));
        drop.classList.toggle("filled", !!state.slots[view]);
    });
    drop.addEventListener("dragover", (e) => e.preventDefault());
    drop.addEventListener("drop", (e) => {
        e.preventDefault();
        const file = e.dataTransfer?.files?.[0];
        if (file) {
            update((0, state_js_1.setSlot)(state, view, file));
            drop.classList.add("filled");
        }
    });
}
function renderOutcome() {
    const out = state.lastResponse;
    const results = $("results");
    results.innerHTML = "";
    if (!out)
        return;
    const vm = (0, render_js_1.buildViewModel)(out);
    if (vm.kind === "error") {
        update({ ...state, errorBanner: vm.message });
        return;
    }
    update({ ...state, errorBanner: null });
    const predicted = document.createElement("div");
    predicted.className = "predicted";
    predicted.textContent = `predicted: ${vm.predicted}`;
    results.appendChild(predicted);
    for (const row of vm.rows) {
        const line = document.createElement("div");
        line.className = "bar-row";
        const label = document.createElement("span");
        label.className = "bar-label";
        label.textContent = row.emotion;
        const bar = document.createElement("div");
        bar.className = "bar";
        bar.style.width = `${(0, render_js_1.barWidthPercent)(row)}%`;
        const value = document.createElement("span");
        value.className = "bar-value";
        value.textContent = row.rawValue; // byte-equal to the response
        line.append(label, bar, value);
        results.appendChild(line);
    }
    const agreement = document.createElement("div");
    agreement.className = "agreement";
    agreement.textContent = "per-view: " + Object.entries(vm.perView)
        .map(([v, label]) => `${v}=${label}`).join("  ");
    results.appendChild(agreement);
    const model = document.createElement("div");
    model.className = "model-id";
    model.textContent = `model ${vm.modelId}`;
    results.appendChild(model);
}
async function refreshService() {
    try {
        const health = await api.health();
        update((0, state_js_1.setServiceStatus)(state, health.status === "ok" ? "ok" : "no-model"));
        const models = await api.models();
        update((0, state_js_1.setModels)(state, models));
        refreshPicker();
    }
    catch {
        update((0, state_js_1.setServiceStatus)(state, "down"));
    }
}
async function onClassify() {
    const result = await submitter.submit(api, state);
    if (!result.applied) {
        if (result.error)
            update({ ...state, errorBanner: result.error });
        return;
    }
    update({ ...state, lastResponse: result.outcome ?? null });
    renderOutcome();
}
async function boot() {
    const config = await (0, api_js_1.loadConfig)();
    api = new api_js_1.ApiClient(config.apiBaseUrl);
    for (const view of state_js_1.VIEW_NAMES)
        wireSlot(view);
    $("models").addEventListener("change", (e) => {
        update((0, state_js_1.selectModel)(state, e.target.value));
    });
    $("classify").addEventListener("click", () => void onClassify());
    $("refresh").addEventListener("click", () => void refreshService());
    await refreshService();
    sync();
}
void boot();
