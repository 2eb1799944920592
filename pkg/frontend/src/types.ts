// JSON shapes served by the study service. These mirror the documented
// service schemas one to one; the editor renders nothing it did not
// receive in the last response.

export type Scalar = string | number | boolean | null;

export interface BindingJson {
    value: Scalar | Scalar[];
    origin: string;
}

export interface DependsJson {
    source: string;
    allowed: Scalar[];
}

export interface AttributeSchema {
    name: string;
    doc: string;
    kind: "float" | "int" | "str";
    domain: { values?: Scalar[]; checker?: string };
    required: boolean;
    interface_only: boolean;
    has_default: boolean;
    macro: string | null;
    depends: DependsJson[];
}

export interface DescriptionJson {
    ident: string;
    type: "description";
    class: string;
    bindings: Record<string, BindingJson>;
    attachments: string[];
    schema?: AttributeSchema[];
    macros?: Record<string, Record<string, string[]>>;
    meaningless?: string[];
}

export interface ScriptJson {
    ident: string;
    type: "script";
    children: string[];
    pending_ops: string[];
}

export type ContextJson = DescriptionJson | ScriptJson;

export interface DiagnosticJson {
    severity: "WARNING" | "ERROR";
    headline: string;
    detail: string[];
    suggestion: string;
    code: string;
}

export interface ReportJson {
    status: boolean;
    diagnostics: DiagnosticJson[];
    missing: [string, string, string][];
    applied_defaults: [string, string, Scalar, string][];
    pruned: [string, string, Scalar][];
    fixpoint_iterations: number;
    incoherent: [string, string][];
}

export interface ContextsResponse {
    contexts: ContextJson[];
    report: ReportJson | null;
}

export interface ContextResponse {
    context: DescriptionJson;
    report: ReportJson | null;
    output?: string;
}

export interface ConsoleResponse {
    output: string;
    report: ReportJson | null;
}

export interface OriginResponse {
    origin: string;
    trace: string;
}

export interface CheckResponse {
    report: ReportJson;
    preview?: boolean;
}
