// Pure HTML rendering of the view-model; app.ts only wires events.

import type { DescriptionJson, ReportJson, Scalar } from "./types.js";
import {
    AttributeRow,
    FormRow,
    MacroGroupRow,
    buildForm,
    renderScalar,
    statusLine,
} from "./viewmodel.js";

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;")
        .replace(/'/g, "&#39;");
}

function widgetHtml(row: AttributeRow, ident: string): string {
    const { attr } = row;
    const current = row.value;
    const name = escapeHtml(attr.name);
    const disabled = attr.interface_only ? " disabled" : "";
    if (row.widget === "select") {
        const options = [`<option value="">(unset)</option>`];
        for (const v of attr.domain.values ?? []) {
            const text = escapeHtml(String(v));
            const selected = current === v ? " selected" : "";
            options.push(`<option value="${text}"${selected}>${text}</option>`);
        }
        return `<select data-set="${escapeHtml(ident)}" data-attr="${name}"${disabled}>` +
            options.join("") + `</select>`;
    }
    const shown = current === undefined || current === null ? "" : String(current);
    const type = row.widget === "number" || row.widget === "integer" ? "number" : "text";
    const step = row.widget === "number" ? ` step="any"` : "";
    return `<input type="${type}"${step} value="${escapeHtml(shown)}" ` +
        `data-set="${escapeHtml(ident)}" data-attr="${name}"${disabled}>`;
}

function markerBadge(marker: "red" | "green" | "none", masked: boolean): string {
    if (masked) {
        return `<span class="badge masked" title="non-coherent value, masked">masked</span>`;
    }
    if (marker === "red") {
        return `<span class="badge red" title="required value missing">required</span>`;
    }
    if (marker === "green") {
        return `<span class="badge green" title="coherent, folded">ok</span>`;
    }
    return "";
}

function attributeRowHtml(row: AttributeRow, ident: string): string {
    const name = escapeHtml(row.attr.name);
    const labelClass = row.marker === "red" ? "attr-label red" : "attr-label";
    const origin = row.origin
        ? `<button class="origin" data-origin="${escapeHtml(ident)}" data-attr="${name}" ` +
          `title="trace this value to its creator">${escapeHtml(row.origin)}</button>`
        : "";
    const valueCell = row.masked
        ? `<span class="masked-value">***</span>`
        : widgetHtml(row, ident);
    return `<tr class="${row.meaningless ? "meaningless" : ""}">` +
        `<td><button class="man ${labelClass}" data-man="${name}" title="${escapeHtml(row.attr.doc)}">${name}</button></td>` +
        `<td>${valueCell}</td>` +
        `<td>${origin}${markerBadge(row.marker, row.masked)}</td></tr>`;
}

function macroRowHtml(row: MacroGroupRow, ident: string): string {
    const name = escapeHtml(row.name);
    const cls = row.marker === "green" ? "macro green" : row.marker === "red" ? "macro red" : "macro";
    const toggle = row.autoFolded
        ? `<span class="fold-state">auto-folded</span>`
        : `<button class="fold" data-fold="${name}">${row.folded ? "unfold" : "fold"}</button>`;
    const head = `<tr class="${cls}"><td>${name}</td>` +
        `<td>${escapeHtml(row.summary)}</td><td>${toggle}${markerBadge(row.marker, false)}</td></tr>`;
    if (row.folded) {
        return head;
    }
    return head + row.members.map((member) => attributeRowHtml(member, ident)).join("");
}

export function renderContextForm(
    context: DescriptionJson,
    report: ReportJson | null,
    userFolded: Set<string> = new Set(),
): string {
    const rows: FormRow[] = buildForm(context, report, userFolded);
    const body = rows
        .map((row) => row.kind === "macro" ? macroRowHtml(row, context.ident) : attributeRowHtml(row, context.ident))
        .join("\n");
    const attachments = context.attachments.length
        ? `<p class="attachments">attached: ${context.attachments.map(escapeHtml).join(", ")}</p>`
        : "";
    return `<h2>${escapeHtml(context.class)}(name='${escapeHtml(context.ident)}')</h2>` +
        attachments +
        `<table class="context-form"><thead><tr><th>attribute</th><th>value</th><th></th></tr></thead>` +
        `<tbody>${body}</tbody></table>`;
}

export function renderReport(report: ReportJson | null): string {
    const line = statusLine(report);
    const cls = line.status ? "status ok" : "status bad";
    const parts = [`<p class="${cls}">${escapeHtml(line.text)}</p>`];
    for (const d of report?.diagnostics ?? []) {
        parts.push(
            `<pre class="diagnostic ${d.severity.toLowerCase()}">` +
            escapeHtml([`${d.severity}: ${d.headline}`, ...d.detail,
                        `suggestion: ${d.suggestion || "none"}`].join("\n")) +
            `</pre>`);
    }
    if (report?.applied_defaults.length) {
        const lines = report.applied_defaults
            .map(([ctx, attr, value, rule]) =>
                `${ctx}.${attr} = ${renderScalar(value as Scalar)}  [${rule}]`)
            .join("\n");
        parts.push(`<pre class="applied">applied defaults:\n${escapeHtml(lines)}</pre>`);
    }
    return parts.join("\n");
}

export function renderConsole(lines: string[]): string {
    return lines.map((line) => `<div class="console-line">${escapeHtml(line)}</div>`).join("");
}

export function renderContextList(idents: string[], active: string | null): string {
    return idents
        .map((ident) => {
            const cls = ident === active ? "context-item active" : "context-item";
            return `<button class="${cls}" data-context="${escapeHtml(ident)}">${escapeHtml(ident)}</button>`;
        })
        .join("");
}
