// Shared test doubles: a canned hit factory and an in-memory service
// the Client can be pointed at.

import type { FetchFn } from "../src/api.js";
import type { Hit, SearchRequestBody, Timings } from "../src/types.js";

export function mkHit(
  rank: number,
  noteId: number,
  mrn: string,
  text: string,
  start: number,
  end: number,
): Hit {
  return {
    rank,
    score: 1 - rank / 100,
    note_id: noteId,
    patient: {
      mrn,
      name: `Patient ${mrn}`,
      birth_date: "2015-03-04",
      sex: "F",
    },
    note_category: "Progress Notes",
    encounter_type: "Office Visit",
    department: "GENERAL PEDIATRICS",
    specialty: "Pediatrics",
    author: { name: "A. Author", role: "Physician" },
    filed_time: "2024-05-01T09:30:00",
    text,
    highlight: { chunk_id: `${noteId}:0`, char_start: start, char_end: end },
  };
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export const TIMINGS: Timings = { embed_ms: 1.5, search_ms: 4.0, hydrate_ms: 0.5 };

/**
 * In-memory stand-in for the service: one workspace, two result pages,
 * search results filtered by the workspace's exclusions.
 */
export class FakeService {
  page1: Hit[] = [
    mkHit(1, 11, "001", "fever resolved overnight", 0, 5),
    mkHit(2, 21, "002", "persistent cough noted", 11, 16),
    mkHit(3, 12, "001", "afebrile at discharge", 0, 8),
  ];
  page2: Hit[] = [
    mkHit(4, 31, "003", "wheeze on exertion", 0, 6),
    mkHit(5, 22, "002", "cough improving", 0, 5),
  ];
  workspace = { included: [] as string[], excluded: [] as string[] };
  deniedNotes = new Set<number>();
  failNextSearch = false;
  rejectCohort = false;
  searchBodies: SearchRequestBody[] = [];

  fetchFn: FetchFn = async (url, init) => {
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const method = init?.method ?? "GET";

    if (method === "POST" && path === "/search") {
      const body = JSON.parse(init?.body as string) as SearchRequestBody;
      this.searchBodies.push(body);
      if (this.failNextSearch) {
        this.failNextSearch = false;
        return jsonResponse(500, { error: "engine unavailable" });
      }
      const page = body.cursor === "page-2" ? this.page2 : this.page1;
      const excluded = new Set(this.workspace.excluded);
      const hits = page.filter((h) => !excluded.has(h.patient.mrn));
      return jsonResponse(200, {
        hits,
        cursor: body.cursor === "page-2" ? null : "page-2",
        generation: 1,
        timings: TIMINGS,
      });
    }

    const noteMatch = path.match(/^\/notes\/(\d+)$/);
    if (noteMatch) {
      const noteId = Number(noteMatch[1]);
      if (this.deniedNotes.has(noteId)) {
        return jsonResponse(403, { error: "note is not approved" });
      }
      const hit = [...this.page1, ...this.page2].find(
        (h) => h.note_id === noteId,
      );
      if (!hit) return jsonResponse(404, { error: "unknown note" });
      return jsonResponse(200, {
        note_id: noteId,
        text: hit.text,
        patient: hit.patient,
        note_category: hit.note_category,
        encounter_type: hit.encounter_type,
        department: hit.department,
        specialty: hit.specialty,
        author: hit.author,
        filed_time: hit.filed_time,
        creation_time: hit.filed_time,
      });
    }

    if (path.startsWith("/cohort/")) {
      if (method === "POST") {
        const action = path.split("/").pop() ?? "";
        if (this.rejectCohort) {
          return jsonResponse(403, { error: "cohort edits not permitted" });
        }
        const { mrn } = JSON.parse(init?.body as string) as { mrn: string };
        this.workspace.included = this.workspace.included.filter(
          (m) => m !== mrn,
        );
        this.workspace.excluded = this.workspace.excluded.filter(
          (m) => m !== mrn,
        );
        if (action === "include") this.workspace.included.push(mrn);
        if (action === "exclude") this.workspace.excluded.push(mrn);
      }
      return jsonResponse(200, {
        workspace_id: "default",
        included_mrns: [...this.workspace.included].sort(),
        excluded_mrns: [...this.workspace.excluded].sort(),
        total: this.workspace.included.length + this.workspace.excluded.length,
      });
    }

    if (path === "/vocab") {
      return jsonResponse(200, {
        categorical: { note_category: ["Progress Notes"] },
        numeric: { date: [20240101, 20241231], age_days: null },
      });
    }
    return jsonResponse(404, { error: `unrouted: ${method} ${path}` });
  };
}
