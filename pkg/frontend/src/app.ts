import { ApiRequestError, createApi } from "./api.js";
import type { ReviewApi, SessionConfig } from "./api.js";
import { ReviewSession, gradeBins } from "./state.js";
import {
  renderCards,
  renderComparePanel,
  renderConflictPrompt,
  renderDecisionForm,
  renderError,
  renderNotice,
  renderReceipt,
  renderRunList,
  renderSparkline,
} from "./render.js";
import type { DecisionRecord, FieldErrors, RunSummary } from "./types.js";

interface Slots {
  runs: HTMLElement;
  status: HTMLElement;
  sparkline: HTMLElement;
  cards: HTMLElement;
  panel: HTMLElement;
  form: HTMLElement;
}

function slot(root: HTMLElement, id: string): HTMLElement {
  const el = root.querySelector<HTMLElement>(`#${id}`);
  if (!el) {
    throw new Error(`missing layout element #${id}`);
  }
  return el;
}

export class ReviewApp {
  private readonly api: ReviewApi;
  private readonly session = new ReviewSession();
  private readonly slots: Slots;
  private runs: RunSummary[] = [];
  private activeRun: string | null = null;
  private runStatus = "";
  private existing: DecisionRecord | null = null;
  private agent: DecisionRecord | null = null;
  private receipt: DecisionRecord | null = null;
  private fieldErrors: FieldErrors = {};
  private notice = "";
  private errorMessage = "";
  private conflictMessage: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    config: SessionConfig,
  ) {
    this.api = createApi(config);
    this.slots = {
      runs: slot(root, "runs"),
      status: slot(root, "status"),
      sparkline: slot(root, "sparkline"),
      cards: slot(root, "cards"),
      panel: slot(root, "panel"),
      form: slot(root, "form"),
    };
    this.bindEvents();
  }

  async start(): Promise<void> {
    await this.refreshRuns();
  }

  private bindEvents(): void {
    this.root.addEventListener("click", (event) => {
      const target = event.target as HTMLElement | null;
      const runRow = target?.closest<HTMLElement>("[data-run-id].run-row");
      if (runRow?.dataset.runId) {
        void this.openRun(runRow.dataset.runId);
        return;
      }
      const action = target?.closest<HTMLElement>("[data-action]");
      if (!action) {
        return;
      }
      if (action.dataset.action === "toggle" && action.dataset.cardId) {
        this.toggleCard(action.dataset.cardId);
      } else if (action.dataset.action === "compare") {
        void this.compare();
      } else if (action.dataset.action === "reload") {
        if (this.activeRun) {
          void this.openRun(this.activeRun);
        }
      }
    });

    this.root.addEventListener("submit", (event) => {
      const form = event.target as HTMLElement | null;
      if (form?.dataset.form === "decision") {
        event.preventDefault();
        void this.submit();
      }
    });

    this.root.addEventListener("input", (event) => {
      const input = event.target as HTMLInputElement | HTMLTextAreaElement | null;
      if (!input?.name) {
        return;
      }
      if (input.name === "rationale") {
        this.session.rationale = input.value;
      } else if (input.name === "decider") {
        this.session.decider = input.value;
      } else if (input.name === "role_description") {
        this.session.criteria.role_description = input.value;
      } else if (input.name === "extra_instructions") {
        this.session.criteria.extra_instructions = input.value;
      }
    });

    this.root.addEventListener("change", (event) => {
      const input = event.target as HTMLInputElement | null;
      if (input?.name !== "hires") {
        return;
      }
      const outcome = this.session.setHires(Number(input.value));
      this.notice = outcome.message ?? "";
      if (!outcome.changed) {
        input.value = String(this.session.criteria.hires);
      }
      this.syncCards();
      this.syncStatus();
    });
  }

  private async refreshRuns(): Promise<void> {
    try {
      this.runs = await this.api.listRuns();
      this.errorMessage = "";
    } catch (error) {
      this.errorMessage = describe(error);
    }
    this.syncRuns();
    this.syncStatus();
  }

  async openRun(runId: string): Promise<void> {
    this.notice = "";
    this.errorMessage = "";
    this.conflictMessage = null;
    this.agent = null;
    this.receipt = null;
    this.fieldErrors = {};
    try {
      const report = await this.api.getRun(runId);
      const cards = await this.api.getShortlist(runId);
      this.activeRun = runId;
      this.runStatus = report.status;
      this.existing = report.decision;
      this.session.loadShortlist(cards);
      this.session.selected = [];
    } catch (error) {
      this.errorMessage = describe(error);
    }
    this.syncAll();
  }

  private toggleCard(cardId: string): void {
    const outcome = this.session.toggleCard(cardId);
    this.notice = outcome.message ?? "";
    this.syncCards();
    this.syncStatus();
    if (this.agent) {
      this.syncPanel();
    }
  }

  private async compare(): Promise<void> {
    if (!this.activeRun) {
      return;
    }
    this.errorMessage = "";
    try {
      this.agent = await this.api.autoDecision(
        this.activeRun,
        this.session.draft().criteria,
      );
      this.session.noteCompared();
    } catch (error) {
      if (error instanceof ApiRequestError && error.status === 409) {
        this.conflictMessage = error.message;
      } else {
        this.errorMessage = describe(error);
      }
    }
    this.syncPanel();
    this.syncStatus();
  }

  private async submit(): Promise<void> {
    if (!this.activeRun) {
      return;
    }
    this.fieldErrors = this.session.validateDraft();
    if (Object.keys(this.fieldErrors).length) {
      this.syncForm();
      return;
    }
    this.errorMessage = "";
    try {
      this.receipt = await this.api.submitDecision(
        this.activeRun,
        this.session.draft(),
        this.session.shouldForceSubmit(),
      );
      this.agent = null;
      this.existing = this.receipt;
    } catch (error) {
      if (error instanceof ApiRequestError && error.status === 409) {
        this.conflictMessage = error.message;
      } else if (error instanceof ApiRequestError && error.status === 422) {
        this.fieldErrors = error.fields;
        this.syncForm();
      } else {
        this.errorMessage = describe(error);
      }
    }
    this.syncPanel();
    this.syncStatus();
  }

  private syncAll(): void {
    this.syncRuns();
    this.syncStatus();
    this.syncCards();
    this.syncPanel();
    this.syncForm();
  }

  private syncRuns(): void {
    this.slots.runs.innerHTML = renderRunList(this.runs, this.activeRun);
  }

  private syncStatus(): void {
    const parts: string[] = [];
    if (this.activeRun) {
      parts.push(
        `<p class="run-headline">Run <code>${this.activeRun}</code>` +
          ` &mdash; status ${this.runStatus}</p>`,
      );
    }
    parts.push(renderNotice(this.notice));
    if (this.errorMessage) {
      parts.push(renderError(this.errorMessage));
    }
    this.slots.status.innerHTML = parts.join("");
  }

  private syncCards(): void {
    this.slots.sparkline.innerHTML = this.session.cards.length
      ? renderSparkline(gradeBins(this.session.cards))
      : "";
    this.slots.cards.innerHTML = renderCards(
      this.session.cards,
      this.session.selected,
    );
  }

  private syncPanel(): void {
    if (this.conflictMessage !== null) {
      this.slots.panel.innerHTML = renderConflictPrompt(this.conflictMessage);
      return;
    }
    const parts: string[] = [];
    if (this.receipt) {
      parts.push(renderReceipt(this.receipt));
    } else if (this.existing) {
      parts.push(
        '<h3 class="existing">Decision already on record</h3>' +
          renderReceipt(this.existing),
      );
    }
    parts.push(renderComparePanel(this.agent, this.session.selected));
    this.slots.panel.innerHTML = parts.join("");
  }

  private syncForm(): void {
    this.slots.form.innerHTML = this.activeRun
      ? renderDecisionForm(this.session, this.fieldErrors)
      : "";
  }
}

function describe(error: unknown): string {
  if (error instanceof ApiRequestError) {
    return error.message;
  }
  return error instanceof Error ? error.message : String(error);
}
