"""Retrieval-quality proxy: multiple-choice QA over planted facts.

Each item asks about one fact planted in one patient's notes. The harness
retrieves the top-k chunks filtered to that patient, hands them to an
answerer `runs` times, and majority-votes the answers. The shipped
answerer is a scripted containment oracle: it picks the option whose text
appears verbatim in a retrieved chunk, falling back to option 0. That
isolates retrieval quality; a generative model can be plugged in behind
the same callable shape.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import dataclass, field

from ..ann import FilterSpec
from ..chunking import chunk_note
from ..ingest import CONDITIONS, INJURIES, ONSET_AGES, PlantedFact

OPTION_COUNT = 5
DEFAULT_RUNS = 5
SWEEP_KS = (1, 5, 10, 20, 30, 40, 50)


@dataclass(frozen=True)
class MCQAItem:
    question: str
    mrn: str
    options: tuple[str, ...]
    answer_index: int
    date_range: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if len(self.options) != OPTION_COUNT:
            raise ValueError(f"items need exactly {OPTION_COUNT} options")
        if not 0 <= self.answer_index < OPTION_COUNT:
            raise ValueError("answer_index out of range")


def majority_vote(votes: list[int]) -> int:
    """Modal vote; ties go to the smallest option index among the modal set."""
    if not votes:
        raise ValueError("votes must be nonempty")
    counts = Counter(votes)
    top = max(counts.values())
    return min(v for v, c in counts.items() if c == top)


class ContainmentOracleAnswerer:
    """Answers correctly exactly when an option string appears in a chunk.

    Deterministic: no containment match means option 0, so a question's
    correctness can only improve as retrieval depth grows.
    """

    def __call__(self, item: MCQAItem, chunk_texts: list[str], rng) -> int:
        for i, option in enumerate(item.options):
            if any(option in text for text in chunk_texts):
                return i
        return 0


class FixedAnswerer:
    def __init__(self, option: int):
        self.option = option

    def __call__(self, item, chunk_texts, rng) -> int:
        return self.option


_DISTRACTOR_POOLS = {
    "condition": CONDITIONS,
    "injury": INJURIES,
    "onset_age": ONSET_AGES,
}


def generate_mcqa_items(
    facts: list[PlantedFact], num_items: int, seed: int = 0
) -> list[MCQAItem]:
    if num_items > len(facts):
        raise ValueError(
            f"asked for {num_items} items but only {len(facts)} facts exist"
        )
    rng = random.Random(seed)
    chosen = rng.sample(facts, num_items)
    items = []
    for fact in chosen:
        pool = [v for v in _DISTRACTOR_POOLS[fact.fact_type] if v != fact.answer]
        distractors = rng.sample(pool, OPTION_COUNT - 1)
        answer_index = rng.randrange(OPTION_COUNT)
        options = (
            distractors[:answer_index] + [fact.answer] + distractors[answer_index:]
        )
        items.append(
            MCQAItem(
                question=fact.question,
                mrn=fact.mrn,
                options=tuple(options),
                answer_index=answer_index,
            )
        )
    return items


def write_items(items: list[MCQAItem], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "question": item.question,
                        "mrn": item.mrn,
                        "options": list(item.options),
                        "answer_index": item.answer_index,
                        "date_range": list(item.date_range)
                        if item.date_range
                        else None,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_items(path: str) -> list[MCQAItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            items.append(
                MCQAItem(
                    question=d["question"],
                    mrn=d["mrn"],
                    options=tuple(d["options"]),
                    answer_index=d["answer_index"],
                    date_range=tuple(d["date_range"]) if d.get("date_range") else None,
                )
            )
    return items


# --------------------------------------------------------------------------


@dataclass
class EvalRun:
    k: int
    runs: int
    total: int
    correct: int
    errored: int
    accuracy: float
    wilson_low: float
    wilson_high: float
    per_item: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "runs": self.runs,
            "total": self.total,
            "correct": self.correct,
            "errored": self.errored,
            "accuracy": self.accuracy,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "per_item": self.per_item,
        }


def _item_filter(item: MCQAItem) -> FilterSpec:
    ranges = {"date": item.date_range} if item.date_range else {}
    return FilterSpec(include={"patient_id": {item.mrn}}, ranges=ranges)


def _chunk_texts(engine, hits) -> list[str]:
    """Hydrate chunk hits back to their text via the note store."""
    note_ids = sorted({h.note_id for h in hits})
    records, missing = engine.store.get_notes(note_ids)
    if missing:
        raise KeyError(f"notes missing during hydration: {missing}")
    chunks_by_note = {
        nid: chunk_note(nid, records[nid].text, engine.config.chunking)
        for nid in note_ids
    }
    texts = []
    for h in hits:
        ordinal = int(h.chunk_id.split(":")[-1])
        texts.append(chunks_by_note[h.note_id][ordinal].text)
    return texts


def run_mcqa(
    engine,
    items: list[MCQAItem],
    answerer,
    k: int,
    runs: int = DEFAULT_RUNS,
    *,
    seed: int = 0,
    nprobe: int | None = None,
    rescore_budget: int | None = None,
) -> EvalRun:
    from .stats import wilson_ci

    rng = random.Random(seed)
    correct = 0
    errored = 0
    per_item = []
    for idx, item in enumerate(items):
        hits = engine.retrieve_chunks(
            item.question,
            k,
            _item_filter(item),
            nprobe=nprobe,
            rescore_budget=rescore_budget,
        )
        texts = _chunk_texts(engine, hits)
        votes = []
        failed = False
        for _ in range(runs):
            try:
                votes.append(int(answerer(item, texts, rng)))
            except Exception as e:
                per_item.append(
                    {"item": idx, "error": f"{type(e).__name__}: {e}"}
                )
                errored += 1
                failed = True
                break
        if failed:
            continue
        final = majority_vote(votes)
        ok = final == item.answer_index
        correct += ok
        per_item.append(
            {"item": idx, "votes": votes, "answer": final, "correct": ok}
        )

    total = len(items) - errored
    accuracy = correct / total if total else 0.0
    low, high = wilson_ci(correct, total) if total else (0.0, 0.0)
    return EvalRun(
        k=k,
        runs=runs,
        total=total,
        correct=correct,
        errored=errored,
        accuracy=accuracy,
        wilson_low=low,
        wilson_high=high,
        per_item=per_item,
    )


def sweep_mcqa(
    engine,
    items: list[MCQAItem],
    answerer,
    ks=SWEEP_KS,
    runs: int = DEFAULT_RUNS,
    **kwargs,
) -> list[EvalRun]:
    return [run_mcqa(engine, items, answerer, k, runs, **kwargs) for k in ks]
