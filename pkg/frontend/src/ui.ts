/**
 * DOM layer. createUi builds the static skeleton once and returns a render
 * function that projects a ChatViewState onto it. It owns no chat logic:
 * step highlighting, outlines, and badges all come from fields the service
 * returned, and user actions are forwarded through the handlers.
 */

import type { ChatViewState, Message } from "./types.js";

export interface UiHandlers {
  onSend(text: string): void;
  onRetry(index: number): void;
}

export interface Ui {
  render(state: ChatViewState): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  testId?: string,
  className?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (testId) {
    node.dataset.testid = testId;
  }
  if (className) {
    node.className = className;
  }
  return node;
}

function messageItem(message: Message, index: number): HTMLLIElement {
  const item = el("li", undefined, `message ${message.role} ${message.status}`);
  const text = el("span", undefined, "text");
  text.textContent = message.text;
  item.appendChild(text);
  if (message.intents && message.intents.length > 0) {
    for (const intent of message.intents) {
      const badge = el("span", undefined, "badge");
      badge.textContent = intent.description;
      badge.title = intent.name;
      item.appendChild(badge);
    }
  }
  if (message.role === "system" && message.stateAfter !== undefined) {
    const tag = el("span", undefined, "state-tag");
    tag.textContent = `step ${message.stateAfter}`;
    item.appendChild(tag);
  }
  if (message.warning) {
    const warning = el("span", undefined, "warning");
    warning.textContent = message.warning;
    item.appendChild(warning);
  }
  if (message.status === "failed") {
    const retry = el("button", undefined, "retry");
    retry.type = "button";
    retry.dataset.index = String(index);
    retry.textContent = "retry";
    item.appendChild(retry);
  }
  return item;
}

export function createUi(root: HTMLElement, handlers: UiHandlers): Ui {
  const title = el("h1", "recipe-title");
  const banner = el("div", "banner", "banner");
  banner.hidden = true;

  const stepList = el("ol", "step-list", "steps");
  const thread = el("ul", "thread", "thread");

  const input = el("input", "input");
  input.type = "text";
  input.placeholder = "say something to the cook";
  const send = el("button", "send");
  send.type = "submit";
  send.textContent = "send";
  const composer = el("form", "composer", "composer");
  composer.appendChild(input);
  composer.appendChild(send);

  const debugToggle = el("button", "debug-toggle");
  debugToggle.type = "button";
  debugToggle.textContent = "debug";
  const debugDrawer = el("pre", "debug-drawer", "debug");
  debugDrawer.hidden = true;

  const sidebar = el("aside", undefined, "sidebar");
  sidebar.appendChild(stepList);
  const main = el("main", undefined, "main");
  main.appendChild(thread);
  main.appendChild(composer);

  root.appendChild(title);
  root.appendChild(banner);
  const columns = el("div", undefined, "columns");
  columns.appendChild(sidebar);
  columns.appendChild(main);
  root.appendChild(columns);
  root.appendChild(debugToggle);
  root.appendChild(debugDrawer);

  let lastState: ChatViewState | null = null;
  let showDebug = false;

  function renderDebug(): void {
    debugDrawer.hidden = !showDebug;
    if (!showDebug) {
      return;
    }
    const debug = lastState?.debug;
    if (!debug) {
      debugDrawer.textContent = "no debug payload yet";
      return;
    }
    const scores = debug.scores
      .map((s) => `step ${s.step}  ${s.score.toFixed(3)}  ${s.micro_step}`)
      .join("\n");
    debugDrawer.textContent = `${debug.prompt}\n\n${scores}`;
  }

  composer.addEventListener("submit", (event) => {
    event.preventDefault();
    if (lastState?.pending) {
      return;
    }
    handlers.onSend(input.value);
    input.value = "";
  });

  thread.addEventListener("click", (event) => {
    const target = event.target as HTMLElement | null;
    const retry = target?.closest<HTMLButtonElement>("button.retry");
    if (retry && retry.dataset.index !== undefined) {
      handlers.onRetry(Number(retry.dataset.index));
    }
  });

  debugToggle.addEventListener("click", () => {
    showDebug = !showDebug;
    renderDebug();
  });

  function render(state: ChatViewState): void {
    lastState = state;
    title.textContent = state.recipe ? state.recipe.title : "cookalong";

    banner.hidden = state.banner === null;
    banner.textContent = state.banner ?? "";

    stepList.replaceChildren();
    if (state.recipe) {
      state.recipe.steps.forEach((step, i) => {
        const item = el("li", undefined, "step");
        if (i + 1 === state.currentStep) {
          item.classList.add("current");
        }
        if (state.selectedSteps.includes(i + 1)) {
          item.classList.add("selected");
        }
        item.textContent = step;
        stepList.appendChild(item);
      });
    }

    thread.replaceChildren(...state.messages.map(messageItem));

    send.disabled = state.pending;
    renderDebug();
  }

  return { render };
}
