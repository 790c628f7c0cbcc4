/**
 * Shared types mirroring the cookalong service's JSON payloads, plus the
 * view-state the UI derives from them. The UI never recomputes tracking or
 * intent logic; everything below `ChatViewState` comes straight from
 * ChatResponse fields.
 */

export interface RecipeSummary {
  id: string;
  title: string;
  n_steps: number;
}

export interface RecipeView {
  id: string;
  title: string;
  steps: string[];
}

export interface IntentLabel {
  id: number;
  name: string;
  description: string;
}

export interface StepScore {
  step: number;
  score: number;
  micro_step: string;
}

export interface DebugInfo {
  prompt: string;
  scores: StepScore[];
}

export interface ChatResponse {
  reply: string;
  intents: IntentLabel[];
  state: number;
  selected_steps: number[];
  warning: string | null;
  debug?: DebugInfo;
}

export interface HistoryTurn {
  role: "user" | "system";
  text: string;
}

export interface SessionView {
  id: string;
  recipe_id: string;
  recipe_title: string;
  history: HistoryTurn[];
  state: number;
  last_intents: number[];
  config: Record<string, unknown>;
  created_at: string;
  updated_at: string;
}

export type MessageStatus = "pending" | "sent" | "failed";

export interface Message {
  role: "user" | "system";
  text: string;
  status: MessageStatus;
  /** Intents detected for a user message, from the ChatResponse. */
  intents?: IntentLabel[];
  /** Instruction state after a system reply, from the ChatResponse. */
  stateAfter?: number;
  warning?: string | null;
}

export interface ChatViewState {
  sessionId: string | null;
  recipe: RecipeView | null;
  messages: Message[];
  /** Mirrors the latest ChatResponse.state; 0 means nothing instructed yet. */
  currentStep: number;
  /** Steps included in the last generation prompt, for the outline. */
  selectedSteps: number[];
  /** True while a message is in flight; blocks the send control. */
  pending: boolean;
  banner: string | null;
  debug: DebugInfo | null;
}

export function initialViewState(): ChatViewState {
  return {
    sessionId: null,
    recipe: null,
    messages: [],
    currentStep: 0,
    selectedSteps: [],
    pending: false,
    banner: null,
    debug: null,
  };
}
