/**
 * Chat console over the npckit session service.
 *
 * The server is the single source of truth: after every accepted turn the
 * transcript is re-fetched and re-rendered from the service's JSON, so
 * reloads and sends can interleave freely without drifting out of order.
 * Scenario badges are only shown for replies whose turn outcome was
 * actually observed; nothing rendered here is invented client-side.
 */

import { ApiClient, ApiError, SessionInfo, Transcript, TranscriptTurn } from "./api.js";

export interface ChatApp {
  readonly root: HTMLElement;
  refreshConversations(): Promise<void>;
  selectConversation(conversationId: string): Promise<void>;
  sendTurn(text: string): Promise<void>;
  reloadTranscript(): Promise<void>;
  sessionId(): string | null;
}

interface AppState {
  session: SessionInfo | null;
  transcript: Transcript | null;
  pending: boolean;
  // npc turn index in the transcript -> routed scenario, from observed outcomes
  scenarios: Map<number, "with_results" | "without_results">;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function createChatApp(root: HTMLElement, api: ApiClient): ChatApp {
  const state: AppState = { session: null, transcript: null, pending: false, scenarios: new Map() };

  const banner = el("div", { "data-testid": "banner", class: "banner", hidden: "" });
  const listSection = el("section", { class: "conversations" });
  const listHeading = el("h2", {}, "Conversations");
  const list = el("ul", { "data-testid": "conversation-list" });
  listSection.append(listHeading, list);

  const sessionSection = el("section", { class: "session", hidden: "" });
  const personaPanel = el("div", { "data-testid": "persona-panel", class: "persona" });
  const noticeArea = el("div", { "data-testid": "notices", class: "notices" });
  const transcriptList = el("ol", { "data-testid": "transcript", class: "transcript" });
  const form = el("form", { "data-testid": "turn-form", class: "composer" });
  const input = el("input", {
    "data-testid": "query-input",
    type: "text",
    placeholder: "Say something to the NPC",
    autocomplete: "off",
  });
  const sendButton = el("button", { "data-testid": "send-button", type: "submit" }, "Send");
  const status = el("span", { "data-testid": "turn-status", class: "status" });
  form.append(input, sendButton, status);
  sessionSection.append(personaPanel, noticeArea, transcriptList, form);

  root.append(banner, listSection, sessionSection);

  function showBanner(message: string, onRetry: () => void): void {
    banner.replaceChildren(
      el("span", {}, message),
      (() => {
        const retry = el("button", { "data-testid": "retry-button", type: "button" }, "Retry");
        retry.addEventListener("click", onRetry);
        return retry;
      })(),
    );
    banner.hidden = false;
  }

  function clearBanner(): void {
    banner.hidden = true;
    banner.replaceChildren();
  }

  function setPending(pending: boolean): void {
    state.pending = pending;
    input.disabled = pending;
    sendButton.disabled = pending;
    status.textContent = pending ? "waiting for the NPC…" : "";
  }

  function renderConversations(entries: { id: string; persona: { name: string; occupation: string } }[]): void {
    list.replaceChildren(
      ...entries.map((entry) => {
        const item = el("li", {});
        const button = el(
          "button",
          { type: "button", "data-conversation-id": entry.id },
          `${entry.persona.name} (${entry.persona.occupation})`,
        );
        button.addEventListener("click", () => {
          void app.selectConversation(entry.id);
        });
        item.append(button);
        return item;
      }),
    );
  }

  function renderPersonaPanel(session: SessionInfo): void {
    const { persona, state: worldState, role } = session.background;
    personaPanel.replaceChildren(
      el("h2", { "data-testid": "persona-name" }, persona.name),
      el("p", { "data-testid": "persona-occupation" }, persona.occupation),
      el(
        "p",
        { "data-testid": "state-line" },
        `${worldState.location} · ${worldState.time} · ${worldState.weather}`,
      ),
      el("p", { class: "role" }, role),
    );
    personaPanel.setAttribute("data-session-id", session.session_id);
  }

  function renderTurn(turn: TranscriptTurn, index: number): HTMLLIElement {
    const item = el("li", { class: `turn ${turn.speaker}`, "data-speaker": turn.speaker });
    item.append(el("span", { "data-testid": "turn-text" }, turn.text));
    if (turn.speaker === "npc") {
      const scenario = state.scenarios.get(index);
      if (scenario !== undefined) {
        item.append(
          el(
            "span",
            { "data-testid": "scenario-badge", "data-scenario": scenario, class: "badge" },
            scenario === "with_results" ? "tools used" : "no tools",
          ),
        );
      }
      const results = turn.tool_results ?? [];
      if (results.length > 0) {
        const trace = el("details", { "data-testid": "tool-trace", class: "trace" });
        trace.append(el("summary", {}, `tool calls (${results.length})`));
        for (const result of results) {
          trace.append(
            el(
              "div",
              { "data-testid": "trace-entry", "data-status": result.status },
              `${result.call.name}(${JSON.stringify(result.call.parameters)}) -> ${result.status}`,
            ),
          );
        }
        item.append(trace);
      }
    }
    return item;
  }

  function renderTranscript(): void {
    const turns = state.transcript?.turns ?? [];
    transcriptList.replaceChildren(...turns.map((turn, index) => renderTurn(turn, index)));
  }

  function showErrorBubble(message: string): void {
    noticeArea.replaceChildren(el("div", { "data-testid": "error-bubble", class: "error-bubble" }, message));
  }

  const app: ChatApp = {
    root,

    async refreshConversations(): Promise<void> {
      try {
        const entries = await api.listConversations();
        clearBanner();
        renderConversations(entries);
      } catch {
        renderConversations([]);
        showBanner("service unreachable", () => {
          void app.refreshConversations();
        });
      }
    },

    async selectConversation(conversationId: string): Promise<void> {
      try {
        const session = await api.createSession(conversationId);
        state.session = session;
        state.transcript = null;
        state.scenarios.clear();
        noticeArea.replaceChildren();
        renderPersonaPanel(session);
        sessionSection.hidden = false;
        await app.reloadTranscript();
      } catch {
        showBanner("could not start the session", () => {
          void app.selectConversation(conversationId);
        });
      }
    },

    async sendTurn(text: string): Promise<void> {
      const query = text.trim();
      if (query === "" || state.session === null || state.pending) {
        return;
      }
      setPending(true);
      noticeArea.replaceChildren();
      let inlineNotice: string | null = null;
      try {
        const outcome = await api.sendTurn(state.session.session_id, query);
        const transcript = await api.getTranscript(state.session.session_id);
        state.transcript = transcript;
        state.scenarios.set(transcript.turns.length - 1, outcome.scenario);
        renderTranscript();
        input.value = "";
      } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
          inlineNotice = "turn in flight";
        } else if (error instanceof ApiError && error.status === 502) {
          const detail = (error.detail as { detail?: { stage?: string; adapter?: string } })?.detail;
          const stage = detail?.stage ?? "unknown stage";
          const adapter = detail?.adapter ?? "unknown adapter";
          showErrorBubble(`backend failure during ${stage} (adapter ${adapter})`);
        } else {
          showErrorBubble("request failed; the service may be down");
        }
      } finally {
        setPending(false);
        if (inlineNotice !== null) {
          status.textContent = inlineNotice;
        }
      }
    },

    async reloadTranscript(): Promise<void> {
      if (state.session === null) {
        return;
      }
      state.transcript = await api.getTranscript(state.session.session_id);
      renderTranscript();
    },

    sessionId(): string | null {
      return state.session?.session_id ?? null;
    },
  };

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    void app.sendTurn(input.value);
  });

  void app.refreshConversations();
  return app;
}
