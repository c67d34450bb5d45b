import type {
  CandidateCard,
  DecisionCriteria,
  DecisionDraft,
  FieldErrors,
} from "./types.js";

export interface ToggleOutcome {
  changed: boolean;
  message?: string;
}

const DEFAULT_DECIDER = "reviewer";

function canonicalCriteria(criteria: DecisionCriteria): string {
  return JSON.stringify({
    hires: criteria.hires,
    role_description: criteria.role_description,
    extra_instructions: criteria.extra_instructions,
  });
}

/** Everything the review screen tracks between renders: the shortlist,
 * which cards are picked, the criteria being edited, and whether the agent
 * comparison already recorded an advisory decision under these criteria.
 */
export class ReviewSession {
  cards: CandidateCard[] = [];
  selected: string[] = [];
  criteria: DecisionCriteria = {
    hires: 1,
    role_description: "",
    extra_instructions: "",
  };
  rationale = "";
  decider = "";
  private comparedWith: string | null = null;

  loadShortlist(cards: CandidateCard[]): void {
    this.cards = [...cards];
    const known = new Set(cards.map((card) => card.id));
    this.selected = this.selected.filter((id) => known.has(id));
  }

  toggleCard(id: string): ToggleOutcome {
    if (!this.cards.some((card) => card.id === id)) {
      return { changed: false, message: `unknown candidate: ${id}` };
    }
    const at = this.selected.indexOf(id);
    if (at >= 0) {
      this.selected.splice(at, 1);
      return { changed: true };
    }
    if (this.selected.length >= this.criteria.hires) {
      return {
        changed: false,
        message:
          `selection is limited to ${this.criteria.hires} hire(s); ` +
          "deselect a card first",
      };
    }
    this.selected.push(id);
    return { changed: true };
  }

  setHires(hires: number): ToggleOutcome {
    if (!Number.isInteger(hires) || hires < 1) {
      return { changed: false, message: "hires must be a whole number >= 1" };
    }
    this.criteria.hires = hires;
    if (this.selected.length > hires) {
      const dropped = this.selected.splice(hires);
      return {
        changed: true,
        message: `deselected ${dropped.join(", ")} to fit ${hires} hire(s)`,
      };
    }
    return { changed: true };
  }

  validateDraft(): FieldErrors {
    const errors: FieldErrors = {};
    if (!this.rationale.trim()) {
      errors["rationale"] = "rationale must not be empty";
    }
    if (this.selected.length !== this.criteria.hires) {
      errors["selected_ids"] =
        `select exactly ${this.criteria.hires} candidate(s), ` +
        `currently ${this.selected.length}`;
    }
    return errors;
  }

  draft(): DecisionDraft {
    return {
      selected_ids: [...this.selected],
      rationale: this.rationale.trim(),
      criteria: { ...this.criteria },
      decider: this.decider.trim() || DEFAULT_DECIDER,
    };
  }

  /** Remember that the agent comparison recorded an advisory decision under
   * the current criteria, so the human's own submission must replace it.
   */
  noteCompared(): void {
    this.comparedWith = canonicalCriteria(this.criteria);
  }

  shouldForceSubmit(): boolean {
    return this.comparedWith === canonicalCriteria(this.criteria);
  }
}

/** Counts of grades per 5-point bin across 0..100; 100 lands in the last
 * bin so the sparkline has a fixed 20-bar layout.
 */
export function gradeBins(cards: CandidateCard[], width = 5): number[] {
  const count = Math.ceil(100 / width);
  const bins = new Array<number>(count).fill(0);
  for (const card of cards) {
    const at = Math.min(Math.floor(card.grade / width), count - 1);
    bins[at] += 1;
  }
  return bins;
}
