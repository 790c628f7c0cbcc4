/**
 * ChatStore holds the whole view state and is the only thing that talks to
 * the API. One message may be in flight at a time: sendMessage is a no-op
 * while pending, mirroring the service's one-request-per-session rule.
 */

import { ApiError, type ChatApi } from "./api.js";
import { initialViewState, type ChatViewState, type Message } from "./types.js";

export type Listener = (state: ChatViewState) => void;

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === null ? err.message : `${err.message} (HTTP ${err.status})`;
  }
  return String(err);
}

export class ChatStore {
  private state: ChatViewState = initialViewState();
  private listeners: Listener[] = [];

  constructor(private readonly api: ChatApi) {}

  getState(): ChatViewState {
    return this.state;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private update(patch: Partial<ChatViewState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  /** Create a fresh session; on failure shows a banner instead of throwing. */
  async startSession(recipeId: string): Promise<void> {
    try {
      const recipe = await this.api.getRecipe(recipeId);
      const session = await this.api.createSession(recipeId);
      this.update({
        ...initialViewState(),
        sessionId: session.id,
        recipe,
        currentStep: session.state,
      });
    } catch (err) {
      this.update({ banner: describeError(err) });
    }
  }

  /**
   * Optimistically append the user bubble, post it, then fold the reply in.
   * Ignored while another message is pending or before a session exists.
   */
  async sendMessage(text: string): Promise<void> {
    const trimmed = text.trim();
    const sessionId = this.state.sessionId;
    if (!trimmed || this.state.pending || sessionId === null) {
      return;
    }
    const bubble: Message = { role: "user", text: trimmed, status: "pending" };
    const index = this.state.messages.length;
    this.update({ pending: true, banner: null, messages: [...this.state.messages, bubble] });
    try {
      const response = await this.api.postMessage(sessionId, trimmed, true);
      const messages = [...this.state.messages];
      messages[index] = { ...bubble, status: "sent", intents: response.intents };
      messages.push({
        role: "system",
        text: response.reply,
        status: "sent",
        stateAfter: response.state,
        warning: response.warning,
      });
      this.update({
        messages,
        currentStep: response.state,
        selectedSteps: response.selected_steps,
        pending: false,
        debug: response.debug ?? null,
      });
    } catch (err) {
      const messages = [...this.state.messages];
      messages[index] = { ...bubble, status: "failed" };
      this.update({ messages, pending: false, banner: describeError(err) });
    }
  }

  /** Re-send a failed bubble: drop it from the thread, then post again. */
  async retryMessage(index: number): Promise<void> {
    const failed = this.state.messages[index];
    if (!failed || failed.status !== "failed" || this.state.pending) {
      return;
    }
    const messages = this.state.messages.filter((_, i) => i !== index);
    this.update({ messages, banner: null });
    await this.sendMessage(failed.text);
  }
}
