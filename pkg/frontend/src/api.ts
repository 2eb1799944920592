// Thin fetch client for the study service. Every mutating call returns
// the embedded fresh check report; callers re-render from it and never
// patch state locally.

import type {
    CheckResponse,
    ConsoleResponse,
    ContextResponse,
    ContextsResponse,
    OriginResponse,
    Scalar,
} from "./types.js";

export class ServiceError extends Error {
    readonly formatted: string;
    readonly severity: string;
    readonly suggestion: string;

    constructor(payload: { headline?: string; formatted?: string; severity?: string; suggestion?: string }) {
        super(payload.headline ?? "service error");
        this.formatted = payload.formatted ?? this.message;
        this.severity = payload.severity ?? "ERROR";
        this.suggestion = payload.suggestion ?? "";
    }
}

export class ApiClient {
    constructor(readonly base: string) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const response = await fetch(this.base + path, init);
        const text = await response.text();
        const contentType = response.headers.get("content-type") ?? "";
        if (!response.ok) {
            if (contentType.includes("application/json")) {
                throw new ServiceError(JSON.parse(text));
            }
            throw new ServiceError({ headline: `HTTP ${response.status} on ${path}` });
        }
        if (contentType.includes("application/json")) {
            return JSON.parse(text) as T;
        }
        return text as unknown as T;
    }

    private post<T>(path: string, body: unknown): Promise<T> {
        return this.request<T>(path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(body),
        });
    }

    contexts(): Promise<ContextsResponse> {
        return this.request("/contexts");
    }

    context(ident: string): Promise<ContextResponse> {
        return this.request(`/context/${encodeURIComponent(ident)}`);
    }

    set(ident: string, attr: string, value: Scalar | Scalar[]): Promise<ContextResponse> {
        return this.post(`/context/${encodeURIComponent(ident)}/set`, { attr, value });
    }

    unset(ident: string, attr: string): Promise<ContextResponse> {
        return this.post(`/context/${encodeURIComponent(ident)}/set`, { attr, value: null });
    }

    check(body: {
        what_if?: [string, string, Scalar][];
        prune?: "preview" | "apply";
        strict?: boolean;
    } = {}): Promise<CheckResponse> {
        return this.post("/check", body);
    }

    consoleExec(line: string): Promise<ConsoleResponse> {
        return this.post("/console", { line });
    }

    origin(ident: string, attr: string): Promise<OriginResponse> {
        return this.request(`/origin/${encodeURIComponent(ident)}/${encodeURIComponent(attr)}`);
    }

    man(topic: string): Promise<{ topic: string; text: string }> {
        return this.request(`/man/${encodeURIComponent(topic)}`);
    }

    dump(): Promise<{ text: string }> {
        return this.post("/dump", {});
    }

    log(): Promise<string> {
        return this.request("/log");
    }
}
