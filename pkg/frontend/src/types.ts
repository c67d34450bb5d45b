export interface RunSummary {
  run_id: string;
  status: string;
}

export interface CandidateCard {
  rank: number;
  id: string;
  grade: number;
  summary: string;
  flags: {
    summary_over_limit: boolean;
  };
}

export interface DecisionCriteria {
  hires: number;
  role_description: string;
  extra_instructions: string;
}

export interface DecisionRecord {
  run_id: string;
  selected_ids: string[];
  rationale: string;
  mode: "auto" | "manual";
  decider: string;
  criteria: DecisionCriteria;
  timestamp: string;
}

export interface DecisionDraft {
  selected_ids: string[];
  rationale: string;
  criteria: DecisionCriteria;
  decider: string;
}

export interface RunReport {
  run_id: string;
  status: string;
  counts: Record<string, number>;
  decision: DecisionRecord | null;
  content_hash: string;
}

export type FieldErrors = Record<string, string>;
