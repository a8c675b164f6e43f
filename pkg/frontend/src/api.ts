/** Typed client for the npckit session service JSON API. */

export interface ConversationEntry {
  id: string;
  persona: { name: string; occupation: string };
}

export interface BackgroundSummary {
  persona: { name: string; age: string; gender: string; occupation: string; appearance: string };
  role: string;
  state: { location: string; time: string; weather: string };
}

export interface SessionInfo {
  session_id: string;
  conversation_id: string;
  background: BackgroundSummary;
}

export interface ToolCallJson {
  name: string;
  parameters: Record<string, unknown>;
}

export interface ToolResultJson {
  call: ToolCallJson;
  status: string;
  payload: unknown;
}

export interface TurnOutcomeJson {
  scenario: "with_results" | "without_results";
  raw_toolcall_output: string;
  parsed_calls: ToolCallJson[];
  valid_calls: ToolCallJson[];
  results: ToolResultJson[];
  response: string;
  timings: Record<string, number>;
  deadline_exceeded: boolean;
}

export interface TranscriptTurn {
  speaker: "player" | "npc";
  text: string;
  tool_calls?: ToolCallJson[];
  tool_results?: ToolResultJson[];
}

export interface Transcript {
  session_id: string;
  conversation_id: string;
  turns: TranscriptTurn[];
}

/** Error for non-2xx responses; `detail` carries the parsed body when present. */
export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, message: string, detail: unknown = null) {
    super(message);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export interface ApiClient {
  listConversations(): Promise<ConversationEntry[]>;
  createSession(conversationId: string): Promise<SessionInfo>;
  sendTurn(sessionId: string, query: string): Promise<TurnOutcomeJson>;
  getTranscript(sessionId: string): Promise<Transcript>;
  deleteSession(sessionId: string): Promise<void>;
}

export class NpckitClient implements ApiClient {
  constructor(private readonly baseUrl: string) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      let detail: unknown = null;
      try {
        detail = await response.json();
      } catch {
        // body was not JSON; status alone will have to do
      }
      throw new ApiError(response.status, `HTTP ${response.status} for ${path}`, detail);
    }
    if (response.status === 204) {
      return undefined as T;
    }
    return (await response.json()) as T;
  }

  listConversations(): Promise<ConversationEntry[]> {
    return this.request<ConversationEntry[]>("/api/conversations");
  }

  createSession(conversationId: string): Promise<SessionInfo> {
    return this.request<SessionInfo>("/api/sessions", {
      method: "POST",
      body: JSON.stringify({ conversation_id: conversationId }),
    });
  }

  sendTurn(sessionId: string, query: string): Promise<TurnOutcomeJson> {
    return this.request<TurnOutcomeJson>(`/api/sessions/${sessionId}/turns`, {
      method: "POST",
      body: JSON.stringify({ query }),
    });
  }

  getTranscript(sessionId: string): Promise<Transcript> {
    return this.request<Transcript>(`/api/sessions/${sessionId}`);
  }

  deleteSession(sessionId: string): Promise<void> {
    return this.request<void>(`/api/sessions/${sessionId}`, { method: "DELETE" });
  }
}
