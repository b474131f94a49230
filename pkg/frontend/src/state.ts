// Application store. Holds the query panel, the current result set, and
// the cohort workspace, and serializes all talk with the API client.
//
// Concurrency contract: at most one search request is in flight. A new
// runSearch while one is active is dropped; searchMore instead queues a
// single follow-up that fires once the active request settles.

import { ApiError, Client } from "./api.js";
import type {
  Hit,
  NoteRecord,
  QueryPanelState,
  Timings,
  Vocab,
  WorkspaceState,
} from "./types.js";
import { defaultPanel, toSearchRequest } from "./types.js";

export type NoteView =
  | { kind: "none" }
  | { kind: "open"; record: NoteRecord }
  | { kind: "denied"; noteId: number };

export type Listener = () => void;

export class AppStore {
  readonly client: Client;
  readonly workspaceId: string;

  panel: QueryPanelState = defaultPanel();
  hits: Hit[] = [];
  cursor: string | null = null;
  timings: Timings | null = null;
  workspace: WorkspaceState | null = null;
  vocab: Vocab | null = null;
  noteView: NoteView = { kind: "none" };
  error: string | null = null;
  inFlight = false;

  private moreQueued = false;
  private listeners: Listener[] = [];

  constructor(client: Client, workspaceId = "default") {
    this.client = client;
    this.workspaceId = workspaceId;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async loadVocab(): Promise<void> {
    try {
      this.vocab = await this.client.getVocab();
    } catch (err) {
      this.error = describe(err);
    }
    this.notify();
  }

  async loadWorkspace(): Promise<void> {
    try {
      this.workspace = await this.client.getWorkspace(this.workspaceId);
    } catch (err) {
      this.error = describe(err);
    }
    this.notify();
  }

  /** Run a fresh search from the panel, replacing the current results. */
  async runSearch(): Promise<void> {
    if (this.inFlight) return;
    this.inFlight = true;
    this.error = null;
    this.notify();
    try {
      const body = toSearchRequest(this.panel, this.workspaceId);
      const response = await this.client.search(body);
      this.hits = response.hits;
      this.cursor = response.cursor;
      this.timings = response.timings;
    } catch (err) {
      // keep whatever is on screen; just surface the failure
      this.error = describe(err);
    } finally {
      this.inFlight = false;
    }
    this.notify();
    await this.drainQueued();
  }

  /** Fetch the next page. Queues (once) if a request is already active. */
  async searchMore(): Promise<void> {
    if (this.inFlight) {
      this.moreQueued = true;
      return;
    }
    if (this.cursor === null) return;
    this.inFlight = true;
    this.error = null;
    this.notify();
    try {
      const body = toSearchRequest(this.panel, this.workspaceId, this.cursor);
      const response = await this.client.search(body);
      this.hits = [...this.hits, ...response.hits];
      this.cursor = response.cursor;
      this.timings = response.timings;
    } catch (err) {
      this.error = describe(err);
    } finally {
      this.inFlight = false;
    }
    this.notify();
    await this.drainQueued();
  }

  private async drainQueued(): Promise<void> {
    if (!this.moreQueued) return;
    this.moreQueued = false;
    await this.searchMore();
  }

  /**
   * Optimistically apply a cohort action, then reconcile with the server.
   * On rejection the previous workspace state is restored.
   */
  async toggleCohort(
    action: "include" | "exclude" | "remove",
    mrn: string,
  ): Promise<void> {
    const before = this.workspace;
    if (before !== null) {
      this.workspace = applyCohortAction(before, action, mrn);
      this.notify();
    }
    try {
      this.workspace = await this.client.updateWorkspace(
        this.workspaceId,
        action,
        mrn,
      );
    } catch (err) {
      this.workspace = before;
      this.error = describe(err);
    }
    this.notify();
  }

  /** Open a note body; a 403 becomes a permission banner, never text. */
  async openNote(noteId: number): Promise<void> {
    try {
      const record = await this.client.getNote(noteId);
      this.noteView = { kind: "open", record };
    } catch (err) {
      if (err instanceof ApiError && err.status === 403) {
        this.noteView = { kind: "denied", noteId };
      } else {
        this.noteView = { kind: "none" };
        this.error = describe(err);
      }
    }
    this.notify();
  }

  closeNote(): void {
    this.noteView = { kind: "none" };
    this.notify();
  }

  reset(): void {
    this.panel = defaultPanel();
    this.hits = [];
    this.cursor = null;
    this.timings = null;
    this.noteView = { kind: "none" };
    this.error = null;
    this.moreQueued = false;
    this.notify();
  }
}

export function applyCohortAction(
  workspace: WorkspaceState,
  action: "include" | "exclude" | "remove",
  mrn: string,
): WorkspaceState {
  const included = workspace.included_mrns.filter((m) => m !== mrn);
  const excluded = workspace.excluded_mrns.filter((m) => m !== mrn);
  if (action === "include") included.push(mrn);
  if (action === "exclude") excluded.push(mrn);
  included.sort();
  excluded.sort();
  return {
    workspace_id: workspace.workspace_id,
    included_mrns: included,
    excluded_mrns: excluded,
    total: included.length + excluded.length,
  };
}

function describe(err: unknown): string {
  if (err instanceof ApiError) return err.message;
  return String(err);
}
