/**
 * Thin typed client for the cookalong HTTP API. All methods reject with
 * ApiError; a null status means the service itself was unreachable.
 */

import type { ChatResponse, RecipeSummary, RecipeView, SessionView } from "./types.js";

export class ApiError extends Error {
  constructor(message: string, readonly status: number | null = null) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ChatApi {
  listRecipes(): Promise<RecipeSummary[]>;
  getRecipe(recipeId: string): Promise<RecipeView>;
  createSession(recipeId: string): Promise<SessionView>;
  getSession(sessionId: string): Promise<SessionView>;
  postMessage(sessionId: string, text: string, debug?: boolean): Promise<ChatResponse>;
}

export class ApiClient implements ChatApi {
  constructor(private readonly baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(`service unreachable: ${String(err)}`, null);
    }
    if (!response.ok) {
      let detail = `request failed (${response.status})`;
      try {
        const body: unknown = await response.json();
        if (body && typeof body === "object" && "detail" in body) {
          detail = String((body as { detail: unknown }).detail);
        }
      } catch {
        // keep the generic message when the body is not JSON
      }
      throw new ApiError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  listRecipes(): Promise<RecipeSummary[]> {
    return this.request("/recipes");
  }

  getRecipe(recipeId: string): Promise<RecipeView> {
    return this.request(`/recipes/${encodeURIComponent(recipeId)}`);
  }

  createSession(recipeId: string): Promise<SessionView> {
    return this.post("/sessions", { recipe_id: recipeId });
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  postMessage(sessionId: string, text: string, debug = true): Promise<ChatResponse> {
    return this.post(`/sessions/${encodeURIComponent(sessionId)}/messages`, { text, debug });
  }
}
