/** Workbench state machine.
 *
 * All semantics live on the server: the workbench only records the server's
 * latest responses and derives what the view may enable.  Every edit runs a
 * validate + preview round trip; commit stays disabled until the server
 * says ok and the utterance is non-empty.
 */
import {
  AuthoringClient, FillOption, Preview, ServiceFailure, SessionView,
  TemplatePattern,
} from "./api.js";

export interface SlotProblem {
  failureClass: string;
  detail: string;
}

export interface WorkbenchState {
  connected: boolean;
  ontologies: string[];
  ontology: string | null;
  patterns: TemplatePattern[];
  session: SessionView | null;
  options: Record<string, FillOption[]>;   // "index:slot" -> legal fills
  validation: { ok: boolean; problem?: SlotProblem };
  preview: Preview | null;
  utterance: string;
  committed: { mr_text: string; utterance: string }[];
  busy: boolean;
}

export function initialState(): WorkbenchState {
  return {
    connected: false,
    ontologies: [],
    ontology: null,
    patterns: [],
    session: null,
    options: {},
    validation: { ok: false },
    preview: null,
    utterance: "",
    committed: [],
    busy: false,
  };
}

export function canCommit(state: WorkbenchState): boolean {
  return state.connected && state.validation.ok
    && state.utterance.trim().length > 0 && state.session !== null;
}

export class Workbench {
  state: WorkbenchState = initialState();
  onChange: (state: WorkbenchState) => void = () => undefined;

  constructor(private client: AuthoringClient) {}

  private emit() {
    this.onChange(this.state);
  }

  async boot(): Promise<void> {
    try {
      const [ontologies, templates] = await Promise.all([
        this.client.ontologies(), this.client.templates()]);
      this.state.connected = true;
      this.state.ontologies = ontologies.ontologies.map((o) => o.name);
      this.state.patterns = templates.templates;
    } catch {
      // unreachable service: read-only banner, nothing may commit
      this.state.connected = false;
    }
    this.emit();
  }

  async openSession(ontology: string): Promise<void> {
    this.state.session = await this.client.createSession(ontology);
    this.state.ontology = ontology;
    this.state.options = {};
    this.state.preview = null;
    this.state.validation = { ok: false };
    this.emit();
  }

  async addTemplate(rule: string): Promise<void> {
    if (!this.state.session) return;
    this.state.session = await this.client.addTemplate(this.state.session.id, rule);
    await this.refresh();
  }

  async removeTemplate(index: number): Promise<void> {
    if (!this.state.session) return;
    this.state.session = await this.client.removeTemplate(
      this.state.session.id, index);
    this.state.options = {};
    await this.refresh();
  }

  /** Lazily fetch the legal fills for one slot. */
  async loadOptions(index: number, slot: string): Promise<FillOption[]> {
    if (!this.state.session) return [];
    const key = `${index}:${slot}`;
    try {
      const { options } = await this.client.fillOptions(
        this.state.session.id, index, slot);
      this.state.options[key] = options;
      this.emit();
      return options;
    } catch (err) {
      if (err instanceof ServiceFailure) {
        this.state.options[key] = [];
        this.state.validation = {
          ok: false,
          problem: { failureClass: err.failureClass, detail: err.detail },
        };
        this.emit();
        return [];
      }
      throw err;
    }
  }

  async setFill(index: number, slot: string, value: string): Promise<void> {
    if (!this.state.session) return;
    this.state.session = await this.client.setFill(
      this.state.session.id, index, slot, value);
    await this.refresh();
  }

  setUtterance(utterance: string): void {
    this.state.utterance = utterance;
    this.emit();
  }

  /** Validate + preview round trip after every edit. */
  async refresh(): Promise<void> {
    if (!this.state.session) return;
    try {
      await this.client.validate(this.state.session.id);
      this.state.preview = await this.client.preview(this.state.session.id);
      this.state.validation = { ok: true };
    } catch (err) {
      this.state.preview = null;
      if (err instanceof ServiceFailure) {
        this.state.validation = {
          ok: false,
          problem: { failureClass: err.failureClass, detail: err.detail },
        };
      } else {
        this.state.connected = false;
        this.state.validation = { ok: false };
      }
    }
    this.emit();
  }

  async commit(): Promise<void> {
    if (!this.state.session || !canCommit(this.state)) {
      throw new ServiceFailure("incomplete",
                               "commit requires a valid sequence and an utterance");
    }
    const result = await this.client.commit(
      this.state.session.id, this.state.utterance);
    this.state.committed.push({
      mr_text: result.example.mr_text,
      utterance: result.example.utterance,
    });
    this.emit();
  }
}
