// Thin typed client for the notesearch HTTP API. The fetch implementation
// is injected so tests can swap in a scripted one.

import type {
  NoteRecord,
  SearchRequestBody,
  SearchResponse,
  Vocab,
  WorkspaceState,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ApiError";
    this.status = status;
  }
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;

export type WorkspaceAction = "include" | "exclude" | "remove";

export class Client {
  private readonly baseUrl: string;
  private readonly user: string;
  private readonly fetchFn: FetchFn;

  constructor(baseUrl: string, user: string, fetchFn?: FetchFn) {
    this.baseUrl = baseUrl.replace(/\/$/, "");
    this.user = user;
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  search(body: SearchRequestBody): Promise<SearchResponse> {
    return this.request<SearchResponse>("POST", "/search", body);
  }

  getNote(noteId: number): Promise<NoteRecord> {
    return this.request<NoteRecord>("GET", `/notes/${noteId}`);
  }

  getVocab(): Promise<Vocab> {
    return this.request<Vocab>("GET", "/vocab");
  }

  getWorkspace(workspaceId: string): Promise<WorkspaceState> {
    return this.request<WorkspaceState>("GET", `/cohort/${workspaceId}`);
  }

  updateWorkspace(
    workspaceId: string,
    action: WorkspaceAction,
    mrn: string,
  ): Promise<WorkspaceState> {
    return this.request<WorkspaceState>(
      "POST",
      `/cohort/${workspaceId}/${action}`,
      { mrn },
    );
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = {
      method,
      headers: {
        "X-User": this.user,
        ...(body !== undefined ? { "Content-Type": "application/json" } : {}),
      },
    };
    if (body !== undefined) init.body = JSON.stringify(body);

    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }

    if (!response.ok) {
      let message = `HTTP ${response.status}`;
      try {
        const payload = (await response.json()) as { error?: string };
        if (payload && typeof payload.error === "string") message = payload.error;
      } catch {
        // non-JSON error body; keep the status line
      }
      throw new ApiError(response.status, message);
    }
    return (await response.json()) as T;
  }
}
