// Wire types for the notesearch service API, plus the query panel model
// and its lossless mapping onto a /search request body.

export interface FilterJson {
  include?: Record<string, string[]>;
  exclude?: Record<string, string[]>;
  ranges?: Record<string, [number, number]>;
}

export interface SearchRequestBody {
  question: string;
  filter?: FilterJson;
  notes_to_retrieve?: number;
  notes_per_patient?: number;
  include_mrns?: string[];
  exclude_mrns?: string[];
  cursor?: string;
  workspace_id?: string;
}

export interface PatientInfo {
  mrn: string;
  name: string;
  birth_date: string;
  sex: string;
}

export interface Highlight {
  chunk_id: string;
  char_start: number;
  char_end: number;
}

export interface Hit {
  rank: number;
  score: number;
  note_id: number;
  patient: PatientInfo;
  note_category: string;
  encounter_type: string;
  department: string;
  specialty: string;
  author: { name: string; role: string };
  filed_time: string;
  text: string;
  highlight: Highlight;
}

export interface Timings {
  embed_ms: number;
  search_ms: number;
  hydrate_ms: number;
}

export interface SearchResponse {
  hits: Hit[];
  cursor: string | null;
  generation: number;
  timings: Timings;
}

export interface NoteRecord {
  note_id: number;
  text: string;
  patient: PatientInfo;
  note_category: string;
  encounter_type: string;
  department: string;
  specialty: string;
  author: { name: string; role: string };
  filed_time: string;
  creation_time: string;
}

export interface WorkspaceState {
  workspace_id: string;
  included_mrns: string[];
  excluded_mrns: string[];
  total: number;
}

export interface Vocab {
  categorical: Record<string, string[]>;
  numeric: Record<string, [number, number] | null>;
}

// ---------------------------------------------------------------- panel

/** The multi-select filter fields the panel exposes, in display order. */
export const FILTER_FIELDS = [
  "note_category",
  "encounter_type",
  "author_type",
  "department",
  "specialty",
] as const;

export type FilterField = (typeof FILTER_FIELDS)[number];

export interface QueryPanelState {
  question: string;
  includeMrns: string[];
  excludeMrns: string[];
  notesToRetrieve: number;
  notesPerPatient: number | null;
  selections: Record<FilterField, string[]>;
  dateRange: [number, number] | null;
  ageRange: [number, number] | null;
}

export function defaultPanel(): QueryPanelState {
  return {
    question: "",
    includeMrns: [],
    excludeMrns: [],
    notesToRetrieve: 20,
    notesPerPatient: null,
    selections: {
      note_category: [],
      encounter_type: [],
      author_type: [],
      department: [],
      specialty: [],
    },
    dateRange: null,
    ageRange: null,
  };
}

/**
 * Panel -> request body. Empty selections are omitted entirely so the
 * request stays minimal; the inverse below restores them as empty.
 */
export function toSearchRequest(
  panel: QueryPanelState,
  workspaceId?: string,
  cursor?: string,
): SearchRequestBody {
  const include: Record<string, string[]> = {};
  for (const field of FILTER_FIELDS) {
    const chosen = panel.selections[field];
    if (chosen.length > 0) include[field] = [...chosen];
  }
  const ranges: Record<string, [number, number]> = {};
  if (panel.dateRange) ranges["date"] = [...panel.dateRange];
  if (panel.ageRange) ranges["age_days"] = [...panel.ageRange];

  const body: SearchRequestBody = {
    question: panel.question,
    notes_to_retrieve: panel.notesToRetrieve,
  };
  if (Object.keys(include).length > 0 || Object.keys(ranges).length > 0) {
    body.filter = {};
    if (Object.keys(include).length > 0) body.filter.include = include;
    if (Object.keys(ranges).length > 0) body.filter.ranges = ranges;
  }
  if (panel.notesPerPatient !== null) body.notes_per_patient = panel.notesPerPatient;
  if (panel.includeMrns.length > 0) body.include_mrns = [...panel.includeMrns];
  if (panel.excludeMrns.length > 0) body.exclude_mrns = [...panel.excludeMrns];
  if (workspaceId !== undefined) body.workspace_id = workspaceId;
  if (cursor !== undefined) body.cursor = cursor;
  return body;
}

/** Inverse of toSearchRequest over panel-producible bodies. */
export function fromSearchRequest(body: SearchRequestBody): QueryPanelState {
  const panel = defaultPanel();
  panel.question = body.question;
  if (body.notes_to_retrieve !== undefined) {
    panel.notesToRetrieve = body.notes_to_retrieve;
  }
  panel.notesPerPatient = body.notes_per_patient ?? null;
  panel.includeMrns = body.include_mrns ? [...body.include_mrns] : [];
  panel.excludeMrns = body.exclude_mrns ? [...body.exclude_mrns] : [];
  const include = body.filter?.include ?? {};
  for (const field of FILTER_FIELDS) {
    const chosen = include[field];
    if (chosen) panel.selections[field] = [...chosen];
  }
  const ranges = body.filter?.ranges ?? {};
  if (ranges["date"]) panel.dateRange = [...ranges["date"]];
  if (ranges["age_days"]) panel.ageRange = [...ranges["age_days"]];
  return panel;
}
