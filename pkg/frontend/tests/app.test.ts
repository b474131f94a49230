// End-to-end wiring through bootstrap: real DOM shell, real store,
// mocked transport underneath the client.

import { beforeEach, describe, expect, it } from "vitest";

import { Client } from "../src/api.js";
import { bootstrap } from "../src/app.js";
import { AppStore } from "../src/state.js";
import { FakeService } from "./fakes.js";

const SHELL = `
  <input id="question" type="text">
  <div id="filters"></div>
  <button id="search">Search</button>
  <button id="search-more">Search More</button>
  <button id="reset">Reset</button>
  <input id="mrn" type="text">
  <button id="cohort-include">Include</button>
  <button id="cohort-exclude">Exclude</button>
  <button id="cohort-remove">Remove</button>
  <div id="cohort"></div>
  <div id="error"></div>
  <div id="results"></div>
  <div id="note-view"></div>
`;

function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}

async function until(what: string, cond: () => boolean): Promise<void> {
  for (let i = 0; i < 100; i += 1) {
    if (cond()) return;
    await flush();
  }
  throw new Error(`timed out waiting for ${what}`);
}

function click(id: string): void {
  (document.getElementById(id) as HTMLButtonElement).click();
}

let service: FakeService;
let store: AppStore;

beforeEach(() => {
  document.body.innerHTML = SHELL;
  service = new FakeService();
  store = new AppStore(new Client("http://svc", "tester", service.fetchFn));
  bootstrap(store);
});

describe("bootstrap wiring", () => {
  it("fills the filter panel from the vocabulary at load", async () => {
    await until("filter selects", () =>
      document.querySelectorAll("#filters select").length > 0,
    );
    const selects = document.querySelectorAll("#filters select");
    expect(selects).toHaveLength(5);
    const categories = document.querySelector(
      'select[data-field="note_category"]',
    ) as HTMLSelectElement;
    expect(Array.from(categories.options, (o) => o.value)).toEqual([
      "Progress Notes",
    ]);
  });

  it("runs a query and renders grouped, highlighted cards", async () => {
    (document.getElementById("question") as HTMLInputElement).value = "fever";
    click("search");
    await until("result cards", () =>
      document.querySelectorAll(".hit-card").length > 0,
    );

    expect(service.searchBodies[0]!.question).toBe("fever");
    const groups = document.querySelectorAll(".patient-group");
    expect(groups).toHaveLength(2);
    const firstMark = groups[0]!.querySelector("mark")!;
    expect(firstMark.textContent).toBe("fever");
    expect(document.querySelector(".latency-badge")?.textContent).toBe(
      "6.0 ms",
    );
  });

  it("pages further results behind the Search More button", async () => {
    (document.getElementById("question") as HTMLInputElement).value = "cough";
    click("search");
    await until("first page", () =>
      document.querySelectorAll(".hit-card").length === 3,
    );
    click("search-more");
    await until("second page", () =>
      document.querySelectorAll(".hit-card").length === 5,
    );
    const more = document.getElementById("search-more") as HTMLButtonElement;
    expect(more.disabled).toBe(true); // no cursor left
  });

  it("opens a note when its card is clicked", async () => {
    (document.getElementById("question") as HTMLInputElement).value = "fever";
    click("search");
    await until("cards", () => document.querySelector(".hit-card") !== null);

    const card = document.querySelector('[data-note-id="11"]') as HTMLElement;
    card.click();
    await until("note body", () =>
      document.querySelector(".note-body") !== null,
    );
    expect(document.querySelector(".note-body")?.textContent).toBe(
      "fever resolved overnight",
    );
  });

  it("excluding an mrn re-searches and drops that patient's cards", async () => {
    (document.getElementById("question") as HTMLInputElement).value = "fever";
    click("search");
    await until("cards", () => document.querySelectorAll(".hit-card").length > 0);
    expect(document.querySelector('[data-mrn="002"]')).not.toBeNull();

    (document.getElementById("mrn") as HTMLInputElement).value = "002";
    click("cohort-exclude");
    await until("patient 002 gone", () =>
      document.querySelector('[data-mrn="002"]') === null &&
      document.querySelectorAll(".hit-card").length > 0,
    );
    expect(document.querySelector("#cohort")?.textContent).toContain(
      "Excludes MRN 002",
    );
  });
});
