/**
 * Entry point: wire ApiClient -> ChatStore -> createUi, populate the recipe
 * picker, and open a session on the first recipe. Same-origin by default,
 * so the built assets are meant to be served by the chat service itself.
 */

import { ApiClient } from "./api.js";
import { ChatStore } from "./store.js";
import { createUi } from "./ui.js";

function bootstrap(root: HTMLElement, picker: HTMLSelectElement): void {
  const api = new ApiClient("");
  const store = new ChatStore(api);
  const ui = createUi(root, {
    onSend: (text) => void store.sendMessage(text),
    onRetry: (index) => void store.retryMessage(index),
  });
  store.subscribe((state) => ui.render(state));
  ui.render(store.getState());

  void (async () => {
    let recipes;
    try {
      recipes = await api.listRecipes();
    } catch {
      // startSession will hit the same wall and surface it as a banner
      await store.startSession("unavailable");
      return;
    }
    if (recipes.length === 0) {
      await store.startSession("none");
      return;
    }
    for (const recipe of recipes) {
      const option = document.createElement("option");
      option.value = recipe.id;
      option.textContent = `${recipe.title} (${recipe.n_steps} steps)`;
      picker.appendChild(option);
    }
    picker.hidden = false;
    picker.addEventListener("change", () => {
      void store.startSession(picker.value);
    });
    await store.startSession(recipes[0].id);
  })();
}

const root = document.querySelector<HTMLElement>("#app");
const picker = document.querySelector<HTMLSelectElement>("#recipe-picker");
if (!root || !picker) {
  throw new Error("missing #app or #recipe-picker container");
}
bootstrap(root, picker);
