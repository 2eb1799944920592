import { describe, expect, it } from "vitest";

import type { AttributeSchema, DescriptionJson, ReportJson } from "../src/types.js";
import {
    buildForm,
    formatDiagnostic,
    renderScalar,
    setStatement,
    statusLine,
    validateInput,
    widgetKind,
} from "../src/viewmodel.js";

function attr(overrides: Partial<AttributeSchema> & { name: string }): AttributeSchema {
    return {
        doc: "",
        kind: "str",
        domain: {},
        required: false,
        interface_only: false,
        has_default: false,
        macro: null,
        depends: [],
        ...overrides,
    };
}

describe("widget derivation from the domain", () => {
    it("enumerated values become a select", () => {
        expect(widgetKind(attr({ name: "phymod", domain: { values: ["euler", "nslam"] } })))
            .toBe("select");
    });
    it("a checker on a float becomes a validated numeric field", () => {
        expect(widgetKind(attr({ name: "cfl", kind: "float",
                                 domain: { checker: "strictly_positive" } })))
            .toBe("number");
    });
    it("file paths stay plain text", () => {
        expect(widgetKind(attr({ name: "init_file", domain: { checker: "file_path" } })))
            .toBe("file");
    });
    it("integers get the integer widget", () => {
        expect(widgetKind(attr({ name: "niter", kind: "int",
                                 domain: { checker: "strictly_positive" } })))
            .toBe("integer");
    });
});

describe("client-side validation mirrors the checkers", () => {
    const cfl = attr({ name: "cfl", kind: "float", domain: { checker: "strictly_positive" } });
    it("accepts a positive float", () => {
        expect(validateInput(cfl, "2.5")).toEqual({ ok: true, value: 2.5 });
    });
    it("rejects zero for strictly positive", () => {
        expect(validateInput(cfl, "0").ok).toBe(false);
    });
    it("rejects non-numeric text", () => {
        expect(validateInput(cfl, "fast").ok).toBe(false);
    });
    it("rejects fractional input for integers", () => {
        const niter = attr({ name: "niter", kind: "int", domain: {} });
        expect(validateInput(niter, "1.5").ok).toBe(false);
        expect(validateInput(niter, "12")).toEqual({ ok: true, value: 12 });
    });
});

function laminarContext(): DescriptionJson {
    return {
        ident: "mod1",
        type: "description",
        class: "model",
        bindings: { phymod: { value: "nslam", origin: "user" } },
        attachments: [],
        schema: [
            attr({ name: "phymod", domain: { values: ["euler", "nslam", "nstur"] }, required: true }),
            attr({ name: "visclaw", domain: { values: ["sutherland", "power"] } }),
            attr({ name: "turbmod", macro: "turbulence",
                   domain: { values: ["keps", "komega"] },
                   depends: [{ source: "phymod", allowed: ["nstur"] }] }),
            attr({ name: "tur_inten", kind: "float", macro: "turbulence",
                   domain: { checker: "strictly_positive" },
                   depends: [{ source: "phymod", allowed: ["nstur"] }] }),
            attr({ name: "ro", kind: "float", macro: "conservative", domain: {} }),
            attr({ name: "roe", kind: "float", macro: "conservative", domain: {} }),
        ],
        macros: {
            turbulence: { "2": ["turbmod", "tur_inten"] },
            conservative: { "2": ["ro", "roe"] },
        },
        meaningless: ["turbmod", "tur_inten"],
    };
}

const emptyReport: ReportJson = {
    status: true,
    diagnostics: [],
    missing: [],
    applied_defaults: [],
    pruned: [],
    fixpoint_iterations: 1,
    incoherent: [],
};

describe("form building, folding, and markers", () => {
    it("auto-folds a macro whose dependency rules fail", () => {
        const rows = buildForm(laminarContext(), emptyReport);
        const macro = rows.find((r) => r.kind === "macro" && r.name === "turbulence");
        expect(macro).toBeDefined();
        if (macro?.kind === "macro") {
            expect(macro.autoFolded).toBe(true);
            expect(macro.folded).toBe(true);
            expect(macro.marker).not.toBe("green");
        }
    });

    it("leaves a meaningful macro unfolded until the user folds it", () => {
        const ctx = laminarContext();
        ctx.bindings.phymod = { value: "nstur", origin: "user" };
        ctx.meaningless = [];
        const unfolded = buildForm(ctx, emptyReport);
        const macro = unfolded.find((r) => r.kind === "macro" && r.name === "turbulence");
        if (macro?.kind === "macro") {
            expect(macro.autoFolded).toBe(false);
            expect(macro.folded).toBe(false);
        }
    });

    it("labels a coherent user-folded fully bound macro green", () => {
        const ctx = laminarContext();
        ctx.bindings = {
            phymod: { value: "nstur", origin: "user" },
            ro: { value: 1.0, origin: "user" },
            roe: { value: 2.5, origin: "user" },
        };
        ctx.meaningless = [];
        const rows = buildForm(ctx, emptyReport, new Set(["conservative"]));
        const macro = rows.find((r) => r.kind === "macro" && r.name === "conservative");
        if (macro?.kind === "macro") {
            expect(macro.folded).toBe(true);
            expect(macro.marker).toBe("green");
            expect(macro.summary).toBe("[1, 2.5]");
        }
    });

    it("labels missing required attributes red", () => {
        const ctx = laminarContext();
        delete ctx.bindings.phymod;
        const report: ReportJson = {
            ...emptyReport,
            status: false,
            missing: [["mod1", "phymod", "always_required:model"]],
        };
        const rows = buildForm(ctx, report);
        const row = rows.find((r) => r.kind === "attribute" && r.attr.name === "phymod");
        if (row?.kind === "attribute") {
            expect(row.marker).toBe("red");
        }
    });

    it("masks values the last report flagged non-coherent", () => {
        const ctx = laminarContext();
        ctx.bindings.visclaw = { value: "sutherland", origin: "user" };
        const report: ReportJson = { ...emptyReport, incoherent: [["mod1", "visclaw"]] };
        const rows = buildForm(ctx, report);
        const row = rows.find((r) => r.kind === "attribute" && r.attr.name === "visclaw");
        if (row?.kind === "attribute") {
            expect(row.masked).toBe(true);
        }
    });

    it("is a pure function of (context, report, folds)", () => {
        const a = buildForm(laminarContext(), emptyReport);
        const b = buildForm(laminarContext(), emptyReport);
        expect(JSON.stringify(a)).toBe(JSON.stringify(b));
    });
});

describe("console line synthesis", () => {
    it("renders the equivalent set statement for a form action", () => {
        expect(setStatement("mod1", "phymod", "nslam"))
            .toBe("mod1.set('phymod', 'nslam')");
        expect(setStatement("num1", "cfl", 2.5)).toBe("num1.set('cfl', 2.5)");
        expect(setStatement("mod1", "conservative", [1, 2.5]))
            .toBe("mod1.set('conservative', [1, 2.5])");
        expect(setStatement("mod1", "phymod", null)).toBe("mod1.set('phymod', None)");
    });
    it("escapes quotes in string values", () => {
        expect(renderScalar("it's")).toBe("'it\\'s'");
    });
});

describe("report summaries", () => {
    it("keeps the three-part diagnostic shape with the suggestion last", () => {
        const text = formatDiagnostic({
            severity: "ERROR",
            headline: "required value missing: mod1.suth_const",
            detail: ["demanded by influence:visclaw:'sutherland'"],
            suggestion: "set(mod1, 'suth_const', <float>)",
            code: "required-missing",
        });
        const lines = text.split("\n");
        expect(lines[0]).toMatch(/^ERROR: /);
        expect(lines[lines.length - 1]).toMatch(/^suggestion: /);
    });
    it("summarizes the status line", () => {
        expect(statusLine(emptyReport).text).toContain("status=true");
        expect(statusLine(null).text).toBe("no check yet");
    });
});
