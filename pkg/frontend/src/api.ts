/** Typed client for the authoring service HTTP API. */

export interface OntologySummary {
  name: string;
  entity_types: string[];
  binary_predicates: string[];
  unary_predicates: string[];
  entities: string[];
}

export interface TemplatePattern {
  rule: string;
  pattern: string;
  slots: string[];
}

export interface TemplateRow {
  index: number;
  rule: string;
  pattern: string;
  slots: string[];
  fills: Record<string, string>;
}

export interface SessionView {
  id: string;
  ontology: string;
  templates: TemplateRow[];
}

export interface FillOption {
  token: string;
  display: string;
}

export interface Failure {
  ok: false;
  failure_class: string;
  detail: string;
}

export interface ValidationOk {
  ok: true;
  templates: string[];
}

export interface Preview {
  ok: true;
  templates: string[];
  mr_text: string;
  turns: string[];
  denotation: string;
}

export interface CommitResult {
  ok: true;
  example: { ontology: string; utterance: string; mr_text: string; templates: string[] };
  total_commits: number;
}

export class ServiceFailure extends Error {
  constructor(public failureClass: string, public detail: string) {
    super(`${failureClass}: ${detail}`);
  }
}

async function request<T>(base: string, method: string, path: string,
                          body?: unknown): Promise<T> {
  const response = await fetch(`${base}${path}`, {
    method,
    headers: { "Content-Type": "application/json" },
    body: body === undefined ? undefined : JSON.stringify(body),
  });
  const payload = await response.json();
  if (!response.ok || payload.ok === false) {
    throw new ServiceFailure(payload.failure_class ?? "unknown",
                             payload.detail ?? response.statusText);
  }
  return payload as T;
}

export class AuthoringClient {
  constructor(public base: string) {}

  ontologies(): Promise<{ ontologies: OntologySummary[] }> {
    return request(this.base, "GET", "/ontologies");
  }

  templates(): Promise<{ templates: TemplatePattern[] }> {
    return request(this.base, "GET", "/templates");
  }

  createSession(ontology: string): Promise<SessionView> {
    return request(this.base, "POST", "/sessions", { ontology });
  }

  addTemplate(id: string, rule: string): Promise<SessionView> {
    return request(this.base, "POST", `/sessions/${id}/fill`,
                   { add_template: rule });
  }

  removeTemplate(id: string, index: number): Promise<SessionView> {
    return request(this.base, "POST", `/sessions/${id}/fill`,
                   { remove_template: index });
  }

  fillOptions(id: string, index: number, slot: string):
      Promise<{ options: FillOption[] }> {
    return request(this.base, "POST", `/sessions/${id}/fill`, { index, slot });
  }

  setFill(id: string, index: number, slot: string, value: string):
      Promise<SessionView> {
    return request(this.base, "POST", `/sessions/${id}/fill`,
                   { index, slot, value });
  }

  validate(id: string): Promise<ValidationOk> {
    return request(this.base, "POST", `/sessions/${id}/validate`);
  }

  preview(id: string): Promise<Preview> {
    return request(this.base, "GET", `/sessions/${id}/preview`);
  }

  commit(id: string, utterance: string): Promise<CommitResult> {
    return request(this.base, "POST", `/sessions/${id}/commit`, { utterance });
  }
}
