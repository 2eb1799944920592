import { describe, expect, it } from "vitest";

import type { AttributeSchema, DescriptionJson, ReportJson } from "../src/types.js";
import { renderContextForm, renderReport } from "../src/render.js";

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

const report: ReportJson = {
    status: false,
    diagnostics: [{
        severity: "WARNING",
        headline: "meaningless value: mod1.visclaw",
        detail: ["visclaw has no meaning while phymod = 'euler'"],
        suggestion: "set phymod to one of ['nslam', 'nstur']",
        code: "meaningless-value",
    }],
    missing: [["mod1", "suth_const", "influence:visclaw:'sutherland'"]],
    applied_defaults: [["mod1", "suth_muref", 1.78938e-5, "context_default:suth_muref:1.78938e-05"]],
    pruned: [],
    fixpoint_iterations: 2,
    incoherent: [["mod1", "visclaw"]],
};

const context: DescriptionJson = {
    ident: "mod1",
    type: "description",
    class: "model",
    bindings: {
        phymod: { value: "euler", origin: "user" },
        visclaw: { value: "sutherland", origin: "user" },
    },
    attachments: ["num1"],
    schema: [
        attr({ name: "phymod", domain: { values: ["euler", "nslam", "nstur"] }, required: true }),
        attr({ name: "visclaw", domain: { values: ["sutherland", "power"] } }),
        attr({ name: "suth_const", kind: "float", domain: { checker: "strictly_positive" } }),
    ],
    macros: {},
    meaningless: ["visclaw"],
};

describe("context form rendering", () => {
    const html = renderContextForm(context, report);

    it("renders one widget per attribute with current values selected", () => {
        expect(html).toContain("model(name='mod1')");
        expect(html).toContain(`<option value="euler" selected>`);
        expect(html).toMatch(/data-attr="suth_const"/);
    });

    it("masks non-coherent values instead of showing them", () => {
        expect(html).toContain("masked-value");
        expect(html).not.toContain(`<option value="sutherland" selected>`);
    });

    it("labels missing required attributes red", () => {
        expect(html).toMatch(/attr-label red[^>]*data-man="suth_const"/);
    });

    it("lists attachments", () => {
        expect(html).toContain("attached: num1");
    });

    it("escapes markup in values", () => {
        const hostile = { ...context, bindings: { phymod: { value: "<script>", origin: "user" } } };
        const rendered = renderContextForm(hostile as DescriptionJson, null);
        expect(rendered).not.toContain("<script>");
    });
});

describe("report rendering", () => {
    const html = renderReport(report);

    it("shows the status line and the three-part diagnostic", () => {
        expect(html).toContain("status=false");
        expect(html).toContain("WARNING: meaningless value: mod1.visclaw");
        expect(html).toContain("suggestion: set phymod");
    });

    it("lists applied contextual defaults", () => {
        expect(html).toContain("applied defaults:");
        expect(html).toContain("context_default:suth_muref:1.78938e-05");
    });
});
