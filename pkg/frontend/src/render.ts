// DOM rendering. Everything here builds nodes with createElement and
// textContent so note text is never parsed as markup.

import type { Hit, Timings, WorkspaceState } from "./types.js";
import type { NoteView } from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

/**
 * Render hit cards grouped by patient. Groups appear in the order the
 * server first returned each patient; cards keep server rank order
 * within a group.
 */
export function renderCards(
  container: HTMLElement,
  hits: Hit[],
  timings: Timings | null,
): void {
  container.textContent = "";

  if (timings !== null) {
    const total = timings.embed_ms + timings.search_ms + timings.hydrate_ms;
    const badge = el("div", "latency-badge", `${total.toFixed(1)} ms`);
    badge.title =
      `embed ${timings.embed_ms.toFixed(1)} ms, ` +
      `search ${timings.search_ms.toFixed(1)} ms, ` +
      `hydrate ${timings.hydrate_ms.toFixed(1)} ms`;
    container.appendChild(badge);
  }

  const groups = new Map<string, HTMLElement>();
  for (const hit of hits) {
    let group = groups.get(hit.patient.mrn);
    if (group === undefined) {
      group = el("section", "patient-group");
      group.dataset["mrn"] = hit.patient.mrn;
      const header = el(
        "h2",
        "patient-header",
        `${hit.patient.name} (MRN ${hit.patient.mrn})`,
      );
      group.appendChild(header);
      groups.set(hit.patient.mrn, group);
      container.appendChild(group);
    }
    group.appendChild(hitCard(hit));
  }
}

function hitCard(hit: Hit): HTMLElement {
  const card = el("article", "hit-card");
  card.dataset["noteId"] = String(hit.note_id);
  card.dataset["rank"] = String(hit.rank);

  const head = el("div", "hit-head");
  head.appendChild(el("span", "score-badge", hit.score.toFixed(3)));
  head.appendChild(
    el(
      "span",
      "hit-meta",
      `${hit.note_category} · ${hit.department} · ${hit.filed_time}`,
    ),
  );
  card.appendChild(head);

  const body = el("p", "hit-text");
  const { char_start, char_end } = hit.highlight;
  body.appendChild(document.createTextNode(hit.text.slice(0, char_start)));
  const mark = document.createElement("mark");
  mark.textContent = hit.text.slice(char_start, char_end);
  body.appendChild(mark);
  body.appendChild(document.createTextNode(hit.text.slice(char_end)));
  card.appendChild(body);
  return card;
}

// ------------------------------------------------------------- cohort

function mrnPhrase(verb: string, mrns: string[]): string {
  if (mrns.length === 0) return `${verb} no MRNs`;
  const noun = mrns.length === 1 ? "MRN" : "MRNs";
  return `${verb} ${noun} ${mrns.join(", ")}`;
}

export function cohortSummary(workspace: WorkspaceState): string {
  const parts = [
    mrnPhrase("Includes", workspace.included_mrns),
    mrnPhrase("Excludes", workspace.excluded_mrns),
  ];
  return `${parts.join(" and ")} (${workspace.total} total)`;
}

export function renderWorkspace(
  container: HTMLElement,
  workspace: WorkspaceState | null,
): void {
  container.textContent = "";
  if (workspace === null) {
    container.appendChild(el("p", "cohort-empty", "No cohort loaded."));
    return;
  }
  container.appendChild(el("p", "cohort-summary", cohortSummary(workspace)));
  if (workspace.included_mrns.length > 0) {
    const link = el("a", "cohort-export", "Export included MRNs");
    link.href = exportHref(workspace);
    link.setAttribute("download", "cohort-mrns.txt");
    container.appendChild(link);
  }
}

/** data: URI carrying the included MRNs, one per line. */
export function exportHref(workspace: WorkspaceState): string {
  const payload = workspace.included_mrns.join("\n") + "\n";
  return "data:text/plain;charset=utf-8," + encodeURIComponent(payload);
}

// ------------------------------------------------------------- chrome

export function renderError(
  container: HTMLElement,
  message: string | null,
): void {
  container.textContent = "";
  if (message === null) return;
  container.appendChild(el("div", "error-banner", message));
}

export function renderNoteView(container: HTMLElement, view: NoteView): void {
  container.textContent = "";
  if (view.kind === "none") return;

  if (view.kind === "denied") {
    container.appendChild(
      el(
        "div",
        "permission-banner",
        `You do not have permission to view note ${view.noteId}.`,
      ),
    );
    return;
  }

  const record = view.record;
  const panel = el("div", "note-panel");
  panel.appendChild(
    el(
      "h3",
      "note-title",
      `Note ${record.note_id} · ${record.patient.name} (MRN ${record.patient.mrn})`,
    ),
  );
  panel.appendChild(
    el(
      "div",
      "note-meta",
      `${record.note_category} · ${record.author.name} (${record.author.role}) · ${record.filed_time}`,
    ),
  );
  panel.appendChild(el("pre", "note-body", record.text));
  container.appendChild(panel);
}
