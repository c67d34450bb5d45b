import type {
  CandidateCard,
  DecisionRecord,
  FieldErrors,
  RunSummary,
} from "./types.js";
import type { ReviewSession } from "./state.js";

export function escapeHtml(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderRunList(
  runs: RunSummary[],
  activeId: string | null,
): string {
  if (!runs.length) {
    return '<p class="empty">No runs in the store yet.</p>';
  }
  const items = runs
    .map((run) => {
      const active = run.run_id === activeId ? " active" : "";
      return `<li>
        <button type="button" class="run-row${active}" data-run-id="${escapeHtml(run.run_id)}">
          <span class="run-id">${escapeHtml(run.run_id)}</span>
          <span class="run-status">${escapeHtml(run.status)}</span>
        </button>
      </li>`;
    })
    .join("");
  return `<ul class="run-list">${items}</ul>`;
}

export function renderSparkline(bins: number[], width = 5): string {
  const max = Math.max(...bins, 1);
  const barWidth = 100 / bins.length;
  const bars = bins
    .map((count, i) => {
      const h = (count / max) * 28;
      const x = (i * barWidth).toFixed(2);
      const label = `${i * width}-${i === bins.length - 1 ? 100 : (i + 1) * width - 1}: ${count}`;
      return `<rect x="${x}" y="${(30 - h).toFixed(2)}" width="${(barWidth * 0.8).toFixed(2)}" height="${h.toFixed(2)}"><title>${label}</title></rect>`;
    })
    .join("");
  return `<svg class="sparkline" viewBox="0 0 100 30" preserveAspectRatio="none" role="img" aria-label="grade histogram">${bars}</svg>`;
}

export function renderCards(
  cards: CandidateCard[],
  selected: string[],
): string {
  if (!cards.length) {
    return '<p class="empty">This run has no shortlist.</p>';
  }
  const picked = new Set(selected);
  const items = cards
    .map((card) => {
      const isPicked = picked.has(card.id);
      const overLimit = card.flags.summary_over_limit
        ? '<span class="badge over-limit">summary over limit</span>'
        : "";
      return `<article class="card${isPicked ? " selected" : ""}" data-card-id="${escapeHtml(card.id)}">
        <header>
          <span class="rank">#${card.rank}</span>
          <span class="candidate-id">${escapeHtml(card.id)}</span>
          <span class="grade">${card.grade}/100</span>
        </header>
        <p class="summary">${escapeHtml(card.summary)}</p>
        <footer>
          ${overLimit}
          <button type="button" data-action="toggle" data-card-id="${escapeHtml(card.id)}" aria-pressed="${isPicked}">
            ${isPicked ? "Deselect" : "Select"}
          </button>
        </footer>
      </article>`;
    })
    .join("");
  return `<div class="card-list">${items}</div>`;
}

function fieldError(errors: FieldErrors, name: string): string {
  const message = errors[name];
  if (!message) {
    return "";
  }
  return `<p class="field-error" data-error-for="${escapeHtml(name)}">${escapeHtml(message)}</p>`;
}

export function renderDecisionForm(
  session: ReviewSession,
  errors: FieldErrors = {},
): string {
  const { criteria } = session;
  return `<form class="decision-form" data-form="decision">
    <div class="field">
      <label for="hires">Hires</label>
      <input id="hires" name="hires" type="number" min="1" value="${criteria.hires}" />
      ${fieldError(errors, "hires")}
    </div>
    <div class="field">
      <label for="role-description">Role description</label>
      <input id="role-description" name="role_description" type="text"
        value="${escapeHtml(criteria.role_description)}"
        placeholder="e.g. three individuals for database development" />
      ${fieldError(errors, "role_description")}
    </div>
    <div class="field">
      <label for="extra-instructions">Extra instructions</label>
      <input id="extra-instructions" name="extra_instructions" type="text"
        value="${escapeHtml(criteria.extra_instructions)}" />
      ${fieldError(errors, "extra_instructions")}
    </div>
    <div class="field">
      <label for="rationale">Rationale</label>
      <textarea id="rationale" name="rationale" rows="3">${escapeHtml(session.rationale)}</textarea>
      ${fieldError(errors, "rationale")}
    </div>
    <div class="field">
      <label for="decider">Decider</label>
      <input id="decider" name="decider" type="text" value="${escapeHtml(session.decider)}"
        placeholder="your name" />
      ${fieldError(errors, "decider")}
    </div>
    ${fieldError(errors, "selected_ids")}
    <div class="actions">
      <button type="button" data-action="compare">Compare with agent</button>
      <button type="submit" data-action="submit">Record decision</button>
    </div>
  </form>`;
}

export function renderComparePanel(
  agent: DecisionRecord | null,
  humanSelected: string[],
): string {
  if (!agent) {
    return "";
  }
  const agentIds = agent.selected_ids.map(escapeHtml).join(", ") || "none";
  const humanIds = humanSelected.map(escapeHtml).join(", ") || "none yet";
  return `<section class="compare-panel">
    <h3>Agent suggestion (advisory only, not submitted)</h3>
    <div class="compare-columns">
      <div class="compare-col" data-side="agent">
        <h4>Agent picked</h4>
        <p class="picks">${agentIds}</p>
        <p class="rationale">${escapeHtml(agent.rationale)}</p>
      </div>
      <div class="compare-col" data-side="human">
        <h4>Your current selection</h4>
        <p class="picks">${humanIds}</p>
      </div>
    </div>
  </section>`;
}

export function renderReceipt(record: DecisionRecord): string {
  return `<section class="receipt">
    <h3>Decision recorded</h3>
    <dl>
      <dt>Mode</dt><dd>${escapeHtml(record.mode)}</dd>
      <dt>Selected</dt><dd>${record.selected_ids.map(escapeHtml).join(", ")}</dd>
      <dt>Decider</dt><dd>${escapeHtml(record.decider)}</dd>
      <dt>Recorded at</dt><dd>${escapeHtml(record.timestamp)}</dd>
    </dl>
  </section>`;
}

export function renderConflictPrompt(message: string): string {
  return `<section class="conflict">
    <p>${escapeHtml(message)}</p>
    <p>Someone recorded a decision for this run since you loaded it.
      Reload to see the current state before deciding again.</p>
    <button type="button" data-action="reload">Reload run</button>
  </section>`;
}

export function renderNotice(message: string): string {
  if (!message) {
    return "";
  }
  return `<p class="notice" role="status">${escapeHtml(message)}</p>`;
}

export function renderError(message: string): string {
  return `<p class="error" role="alert">${escapeHtml(message)}</p>`;
}
