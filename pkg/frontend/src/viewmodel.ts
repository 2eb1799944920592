// Pure view-model: everything here is a function of the last service
// response (plus ephemeral user fold toggles), so reloading the page
// and replaying the log reproduces identical markers.

import type {
    AttributeSchema,
    DescriptionJson,
    DiagnosticJson,
    ReportJson,
    Scalar,
} from "./types.js";

export type WidgetKind = "select" | "number" | "integer" | "text" | "file";

export function widgetKind(attr: AttributeSchema): WidgetKind {
    if (attr.domain.values && attr.domain.values.length > 0) {
        return "select";
    }
    if (attr.domain.checker === "file_path") {
        return "file";
    }
    if (attr.kind === "float") {
        return "number";
    }
    if (attr.kind === "int") {
        return "integer";
    }
    return "text";
}

// Client-side mirror of the engine's checker predicates, used only to
// validate numeric fields before a round trip; the service remains the
// authority.
const CHECKERS: Record<string, (v: number) => boolean> = {
    strictly_positive: (v) => v > 0,
    non_negative: (v) => v >= 0,
    strictly_negative: (v) => v < 0,
    non_positive: (v) => v <= 0,
    nonzero: (v) => v !== 0,
    unit_interval: (v) => v >= 0 && v <= 1,
    unrestricted: () => true,
    file_path: () => true,
};

export function validateInput(attr: AttributeSchema, raw: string): { ok: boolean; value?: Scalar; reason?: string } {
    const kind = widgetKind(attr);
    if (kind === "number" || kind === "integer") {
        const value = Number(raw);
        if (!Number.isFinite(value)) {
            return { ok: false, reason: `${attr.name} needs a ${attr.kind} value` };
        }
        if (kind === "integer" && !Number.isInteger(value)) {
            return { ok: false, reason: `${attr.name} needs an integer value` };
        }
        const checkerName = attr.domain.checker;
        const checker = checkerName ? CHECKERS[checkerName] : undefined;
        if (checkerName && checker && !checker(value)) {
            return { ok: false, reason: `${attr.name} must be ${checkerName.replace(/_/g, " ")}` };
        }
        return { ok: true, value };
    }
    if (raw.length === 0) {
        return { ok: false, reason: `${attr.name} needs a value` };
    }
    return { ok: true, value: raw };
}

export type Marker = "red" | "green" | "none";

export interface AttributeRow {
    kind: "attribute";
    attr: AttributeSchema;
    widget: WidgetKind;
    value: Scalar | Scalar[] | undefined;
    origin: string | null;
    marker: Marker;
    masked: boolean;
    meaningless: boolean;
}

export interface MacroGroupRow {
    kind: "macro";
    name: string;
    members: AttributeRow[];
    folded: boolean;
    autoFolded: boolean;
    marker: Marker;
    summary: string;
}

export type FormRow = AttributeRow | MacroGroupRow;

function missingSet(report: ReportJson | null, ident: string): Set<string> {
    const out = new Set<string>();
    for (const [ctx, attr] of report?.missing ?? []) {
        if (ctx === ident) {
            out.add(attr);
        }
    }
    return out;
}

function incoherentSet(report: ReportJson | null, ident: string): Set<string> {
    const out = new Set<string>();
    for (const [ctx, attr] of report?.incoherent ?? []) {
        if (ctx === ident) {
            out.add(attr);
        }
    }
    return out;
}

function largestVersion(versions: Record<string, string[]>): string[] {
    const arities = Object.keys(versions).map(Number).sort((a, b) => b - a);
    const top = arities[0];
    return top === undefined ? [] : versions[String(top)] ?? [];
}

function attributeRow(
    attr: AttributeSchema,
    context: DescriptionJson,
    missing: Set<string>,
    incoherent: Set<string>,
    meaningless: Set<string>,
): AttributeRow {
    const binding = context.bindings[attr.name];
    return {
        kind: "attribute",
        attr,
        widget: widgetKind(attr),
        value: binding?.value,
        origin: binding?.origin ?? null,
        marker: missing.has(attr.name) ? "red" : "none",
        masked: incoherent.has(attr.name),
        meaningless: meaningless.has(attr.name),
    };
}

/** One row per plain attribute, one foldable group per macro.
 *
 * Folding is automatic when the macro's dependency rules fail (any
 * member declared meaningless); a meaningful, fully bound group that
 * the user folded is labeled green, a group with missing required
 * members red.
 */
export function buildForm(
    context: DescriptionJson,
    report: ReportJson | null,
    userFolded: Set<string> = new Set(),
): FormRow[] {
    const schema = context.schema ?? [];
    const macros = context.macros ?? {};
    const missing = missingSet(report, context.ident);
    const incoherent = incoherentSet(report, context.ident);
    const meaningless = new Set(context.meaningless ?? []);
    const bySchema = new Map(schema.map((attr) => [attr.name, attr]));

    const rows: FormRow[] = [];
    const grouped = new Set<string>();
    const emitted = new Set<string>();

    for (const attr of schema) {
        if (emitted.has(attr.name) || grouped.has(attr.name)) {
            continue;
        }
        if (attr.macro && macros[attr.macro]) {
            const members = largestVersion(macros[attr.macro] ?? {});
            const memberRows = members
                .map((name) => bySchema.get(name))
                .filter((m): m is AttributeSchema => m !== undefined)
                .map((m) => attributeRow(m, context, missing, incoherent, meaningless));
            for (const name of members) {
                grouped.add(name);
                emitted.add(name);
            }
            const autoFolded = memberRows.some((row) => row.meaningless);
            const folded = autoFolded || userFolded.has(attr.macro);
            const allBound = memberRows.length > 0 &&
                memberRows.every((row) => row.value !== undefined && !row.masked);
            const anyRed = memberRows.some((row) => row.marker === "red");
            const marker: Marker = anyRed ? "red" : folded && allBound && !autoFolded ? "green" : "none";
            const summary = allBound
                ? `[${memberRows.map((row) => renderScalar(row.value as Scalar)).join(", ")}]`
                : autoFolded
                    ? "(meaningless in this context)"
                    : "(unfolded to edit)";
            rows.push({
                kind: "macro",
                name: attr.macro,
                members: memberRows,
                folded,
                autoFolded,
                marker,
                summary,
            });
            continue;
        }
        emitted.add(attr.name);
        rows.push(attributeRow(attr, context, missing, incoherent, meaningless));
    }
    return rows;
}

export function renderScalar(value: Scalar | Scalar[] | undefined): string {
    if (value === undefined || value === null) {
        return "None";
    }
    if (Array.isArray(value)) {
        return `[${value.map((v) => renderScalar(v)).join(", ")}]`;
    }
    if (typeof value === "string") {
        return `'${value.replace(/\\/g, "\\\\").replace(/'/g, "\\'")}'`;
    }
    return String(value);
}

/** The script statement equivalent to a form action; the console pane
 * mirrors every GUI action as exactly this line. */
export function setStatement(ident: string, attr: string, value: Scalar | Scalar[]): string {
    return `${ident}.set('${attr}', ${renderScalar(value)})`;
}

export function formatDiagnostic(d: DiagnosticJson): string {
    const lines = [`${d.severity}: ${d.headline}`, ...d.detail];
    lines.push(`suggestion: ${d.suggestion || "none"}`);
    return lines.join("\n");
}

export interface StatusLine {
    status: boolean;
    text: string;
}

export function statusLine(report: ReportJson | null): StatusLine {
    if (!report) {
        return { status: true, text: "no check yet" };
    }
    const errors = report.diagnostics.filter((d) => d.severity === "ERROR").length;
    const warnings = report.diagnostics.filter((d) => d.severity === "WARNING").length;
    return {
        status: report.status,
        text: `status=${report.status} (${errors} error(s), ${warnings} warning(s), ` +
            `${report.missing.length} missing)`,
    };
}
