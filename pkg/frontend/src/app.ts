// Browser bootstrap: wires DOM events to the API client and re-renders
// whole panes from each response. No state lives outside the last
// response except the fold toggles and the console history cache.

import { ApiClient, ServiceError } from "./api.js";
import { renderConsole, renderContextForm, renderContextList, renderReport } from "./render.js";
import { setStatement, validateInput } from "./viewmodel.js";
import type { DescriptionJson, ReportJson } from "./types.js";

const api = new ApiClient("");

interface UiState {
    active: string | null;
    context: DescriptionJson | null;
    report: ReportJson | null;
    folded: Set<string>;
}

const state: UiState = { active: null, context: null, report: null, folded: new Set() };

function element<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

async function refreshContexts() {
    const body = await api.contexts();
    const descriptions = body.contexts
        .filter((c) => c.type === "description")
        .map((c) => c.ident)
        .sort();
    element("contexts").innerHTML = renderContextList(descriptions, state.active);
    if (body.report) {
        state.report = body.report;
    }
}

async function openContext(ident: string) {
    const body = await api.context(ident);
    state.active = ident;
    state.context = body.context;
    if (body.report) {
        state.report = body.report;
    }
    renderAll();
}

async function refreshConsole() {
    const log = await api.log();
    element("console-history").innerHTML = renderConsole(log.split("\n").filter(Boolean));
    const pane = element("console-history");
    pane.scrollTop = pane.scrollHeight;
}

function renderAll() {
    if (state.context) {
        element("form").innerHTML = renderContextForm(state.context, state.report, state.folded);
    }
    element("report").innerHTML = renderReport(state.report);
    void refreshContexts();
    void refreshConsole();
}

function showPopup(title: string, text: string) {
    element("popup-title").textContent = title;
    element("popup-body").textContent = text;
    element<HTMLDialogElement>("popup").showModal();
}

function showError(err: unknown) {
    if (err instanceof ServiceError) {
        showPopup(err.severity, err.formatted);
    } else {
        showPopup("ERROR", String(err));
    }
}

async function applySet(ident: string, attr: string, raw: string) {
    if (!state.context) {
        return;
    }
    const schema = (state.context.schema ?? []).find((a) => a.name === attr);
    let value: unknown = raw === "" ? null : raw;
    if (schema && raw !== "") {
        const validated = validateInput(schema, raw);
        if (!validated.ok) {
            showPopup("WARNING", validated.reason ?? "invalid input");
            return;
        }
        value = validated.value;
    }
    try {
        const body = await api.set(ident, attr, value as never);
        state.context = body.context;
        state.report = body.report;
        renderAll();
    } catch (err) {
        showError(err);
    }
}

async function runConsoleLine(line: string) {
    try {
        const body = await api.consoleExec(line);
        state.report = body.report;
        if (body.output.trim()) {
            showPopup("output", body.output);
        }
        if (state.active) {
            await openContext(state.active);
        } else {
            renderAll();
        }
    } catch (err) {
        showError(err);
        void refreshConsole();
    }
}

function wire() {
    element("contexts").addEventListener("click", (event) => {
        const target = (event.target as HTMLElement).closest<HTMLElement>("[data-context]");
        if (target?.dataset.context) {
            void openContext(target.dataset.context);
        }
    });

    element("form").addEventListener("change", (event) => {
        const target = event.target as HTMLInputElement | HTMLSelectElement;
        const ident = target.dataset.set;
        const attr = target.dataset.attr;
        if (ident && attr) {
            void applySet(ident, attr, target.value);
        }
    });

    element("form").addEventListener("click", (event) => {
        const target = (event.target as HTMLElement).closest<HTMLElement>("button");
        if (!target) {
            return;
        }
        if (target.dataset.fold) {
            const name = target.dataset.fold;
            if (state.folded.has(name)) {
                state.folded.delete(name);
            } else {
                state.folded.add(name);
            }
            renderAll();
        } else if (target.dataset.man) {
            void api.man(target.dataset.man)
                .then((body) => showPopup(`man(${body.topic})`, body.text))
                .catch(showError);
        } else if (target.dataset.origin && target.dataset.attr) {
            void api.origin(target.dataset.origin, target.dataset.attr)
                .then((body) => showPopup("origin", body.trace))
                .catch(showError);
        }
    });

    element("check").addEventListener("click", () => {
        void api.check({}).then((body) => {
            state.report = body.report;
            if (state.active) {
                void openContext(state.active);
            } else {
                renderAll();
            }
        }).catch(showError);
    });

    element("what-if").addEventListener("click", () => {
        if (!state.active) {
            return;
        }
        const attr = element<HTMLInputElement>("what-if-attr").value.trim();
        const raw = element<HTMLInputElement>("what-if-value").value.trim();
        if (!attr) {
            return;
        }
        void api.check({ what_if: [[state.active, attr, raw]] })
            .then((body) => showPopup(
                `what if ${state.active}.${attr} = ${raw}`,
                JSON.stringify(body.report.missing, null, 1)))
            .catch(showError);
    });

    element("prune").addEventListener("click", () => {
        void api.check({ prune: "preview" }).then((body) => {
            const pruned = body.report.pruned
                .map(([ctx, attr, value]) => `${ctx}.${attr} (was ${JSON.stringify(value)})`)
                .join("\n") || "(nothing to prune)";
            element("popup-title").textContent = "prune preview";
            element("popup-body").textContent = pruned;
            element("prune-confirm").hidden = body.report.pruned.length === 0;
            element<HTMLDialogElement>("popup").showModal();
        }).catch(showError);
    });

    element("prune-confirm").addEventListener("click", () => {
        element<HTMLDialogElement>("popup").close();
        element("prune-confirm").hidden = true;
        void api.check({ prune: "apply" }).then((body) => {
            state.report = body.report;
            if (state.active) {
                void openContext(state.active);
            }
        }).catch(showError);
    });

    element("dump").addEventListener("click", () => {
        void api.dump().then((body) => showPopup("canonical dump", body.text)).catch(showError);
    });

    element<HTMLFormElement>("console-form").addEventListener("submit", (event) => {
        event.preventDefault();
        const input = element<HTMLInputElement>("console-input");
        const line = input.value.trim();
        if (line) {
            input.value = "";
            void runConsoleLine(line);
        }
    });

    element("popup-close").addEventListener("click", () => {
        element<HTMLDialogElement>("popup").close();
        element("prune-confirm").hidden = true;
    });
}

export function main() {
    wire();
    void refreshContexts().then(async () => {
        const body = await api.contexts();
        const first = body.contexts.find((c) => c.type === "description");
        if (first) {
            await openContext(first.ident);
        } else {
            renderAll();
        }
    }).catch(showError);
}

if (typeof document !== "undefined") {
    main();
}

// re-exported for tests
export { setStatement };
