// Page bootstrap: wires the static shell in index.html to the store.

import { Client } from "./api.js";
import { AppStore } from "./state.js";
import {
  renderCards,
  renderError,
  renderNoteView,
  renderWorkspace,
} from "./render.js";
import { FILTER_FIELDS, type FilterField } from "./types.js";

function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (handle !== undefined) clearTimeout(handle);
    handle = setTimeout(() => fn(...args), waitMs);
  };
}

function need(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node;
}

export function bootstrap(store: AppStore): void {
  const question = need("question") as HTMLInputElement;
  const searchBtn = need("search") as HTMLButtonElement;
  const moreBtn = need("search-more") as HTMLButtonElement;
  const resetBtn = need("reset") as HTMLButtonElement;
  const mrnInput = need("mrn") as HTMLInputElement;
  const includeBtn = need("cohort-include") as HTMLButtonElement;
  const excludeBtn = need("cohort-exclude") as HTMLButtonElement;
  const removeBtn = need("cohort-remove") as HTMLButtonElement;
  const filtersBox = need("filters");
  const results = need("results");
  const cohort = need("cohort");
  const noteView = need("note-view");
  const errorBox = need("error");

  const selects = new Map<FilterField, HTMLSelectElement>();

  store.subscribe(() => {
    renderError(errorBox, store.error);
    renderCards(results, store.hits, store.timings);
    renderWorkspace(cohort, store.workspace);
    renderNoteView(noteView, store.noteView);
    moreBtn.disabled = store.cursor === null;
    searchBtn.disabled = store.inFlight;

    // build filter selects once the vocabulary arrives
    if (store.vocab !== null && selects.size === 0) {
      for (const field of FILTER_FIELDS) {
        const values = store.vocab.categorical[field] ?? [];
        const label = document.createElement("label");
        label.textContent = field.replace("_", " ");
        const select = document.createElement("select");
        select.multiple = true;
        select.dataset["field"] = field;
        for (const value of values) {
          const option = document.createElement("option");
          option.value = value;
          option.textContent = value;
          select.appendChild(option);
        }
        select.addEventListener("change", () => {
          store.panel.selections[field] = Array.from(
            select.selectedOptions,
            (o) => o.value,
          );
        });
        label.appendChild(select);
        filtersBox.appendChild(label);
        selects.set(field, select);
      }
    }
  });

  const searchNow = () => {
    store.panel.question = question.value;
    void store.runSearch();
  };

  question.addEventListener("input", debounce(searchNow, 300));
  question.addEventListener("keydown", (event) => {
    if (event.key === "Enter") searchNow();
  });
  searchBtn.addEventListener("click", searchNow);
  moreBtn.addEventListener("click", () => void store.searchMore());
  resetBtn.addEventListener("click", () => {
    question.value = "";
    for (const select of selects.values()) {
      for (const option of Array.from(select.options)) option.selected = false;
    }
    store.reset();
  });

  const cohortAction = (action: "include" | "exclude" | "remove") => {
    const mrn = mrnInput.value.trim();
    if (!mrn) return;
    void store.toggleCohort(action, mrn).then(() => store.runSearch());
  };
  includeBtn.addEventListener("click", () => cohortAction("include"));
  excludeBtn.addEventListener("click", () => cohortAction("exclude"));
  removeBtn.addEventListener("click", () => cohortAction("remove"));

  results.addEventListener("click", (event) => {
    const card = (event.target as HTMLElement).closest("[data-note-id]");
    if (card instanceof HTMLElement && card.dataset["noteId"]) {
      void store.openNote(Number(card.dataset["noteId"]));
    }
  });
  noteView.addEventListener("click", () => store.closeNote());

  void store.loadVocab();
  void store.loadWorkspace();
}

export function main(): void {
  const config = window as unknown as {
    NOTESEARCH_API?: string;
    NOTESEARCH_USER?: string;
  };
  const base = config.NOTESEARCH_API ?? "";
  const user = config.NOTESEARCH_USER ?? "console";
  const store = new AppStore(new Client(base, user));
  bootstrap(store);
}

if (typeof document !== "undefined" && document.getElementById("results")) {
  main();
}
