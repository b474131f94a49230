"""Corpus ingestion: generate or load notes, partition by filed month, then
chunk, embed, and insert into the index and note store.

Partitions are processed independently and resumably. The embed stage is the
expensive one, so each partition's vectors are cached on disk before any
insert happens; a re-run after a mid-insert crash reuses the cache instead
of re-embedding, and inserts skip chunk ids the index already holds.

The synthetic corpus exists because the real notes cannot leave the health
system. Notes are templated clinical prose with three planted facts per
patient (a diagnosis, an onset age, an injury); the facts land verbatim in
the text and are recorded in a ground-truth file that the MCQA harness
turns into questions.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta

import numpy as np

from .ann import AttributeSet, PartitionedIndex, VectorEntry
from .chunking import ChunkingConfig, chunk_note, count_chunks, tokenize
from .embedding import EmbeddingProvider
from .notestore import Author, NoteRecord, NoteStore, Patient

_EPOCH = date(1970, 1, 1)


def note_attributes(record: NoteRecord) -> AttributeSet:
    """The filterable view of a note, as indexed alongside each chunk."""
    filed = datetime.fromisoformat(record.filed_time)
    born = date.fromisoformat(record.patient.birth_date)
    return AttributeSet(
        categorical={
            "patient_id": record.patient.mrn,
            "note_category": record.note_category,
            "encounter_type": record.encounter_type,
            "department": record.department,
            "specialty": record.specialty,
            "author_type": record.author.role,
            "author_name": record.author.name,
        },
        numeric={
            "date": float((filed.date() - _EPOCH).days),
            "age_days": float((filed.date() - born).days),
        },
    )


def partition_key_for(record: NoteRecord) -> str:
    return record.filed_time[:7]  # YYYY-MM


# --------------------------------------------------------------------------
# Synthetic corpus


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    seed: int = 0
    num_patients: int = 40
    notes_per_patient: tuple[int, int] = (2, 5)  # uniform inclusive range
    specialties: tuple[str, ...] = (
        "Oncology",
        "Cardiology",
        "Neurology",
        "Endocrinology",
        "General Pediatrics",
    )
    note_categories: tuple[str, ...] = (
        "Progress Notes",
        "Discharge Summary",
        "Consult Note",
        "Telephone Encounter",
        "ED Notes",
    )
    encounter_types: tuple[str, ...] = (
        "Office Visit",
        "Hospital Encounter",
        "Telephone",
        "Emergency",
    )
    author_roles: tuple[str, ...] = (
        "Physician",
        "Nurse",
        "Fellow",
        "Physician Assistant",
    )
    date_range: tuple[str, str] = ("2018-01-01", "2023-12-31")

    def __post_init__(self):
        lo, hi = self.notes_per_patient
        if not (1 <= lo <= hi):
            raise ValueError("notes_per_patient must be a valid inclusive range")
        if self.num_patients < 0:
            raise ValueError("num_patients must be non-negative")


# Values within one bank are chosen so none is a substring of another; a
# containment check against note text can then never match two options.
CONDITIONS = (
    "neuroblastoma of the right adrenal gland",
    "acute lymphoblastic leukemia",
    "tetralogy of Fallot",
    "cystic fibrosis",
    "type 1 diabetes mellitus",
    "juvenile idiopathic arthritis",
    "focal cortical dysplasia",
    "hypertrophic cardiomyopathy",
    "Crohn disease of the terminal ileum",
    "sickle cell anemia",
    "medulloblastoma of the posterior fossa",
    "congenital hypothyroidism",
    "Kawasaki disease",
    "Duchenne muscular dystrophy",
    "biliary atresia",
    "Wilms tumor of the left kidney",
    "myasthenia gravis",
    "alpha-1 antitrypsin deficiency",
    "Ewing sarcoma of the femur",
    "nephrotic syndrome",
)

# Single-digit ages only: multi-digit age strings contain single-digit
# ones as substrings ("12 years" contains "2 years"), which would let a
# wrong option match inside planted text during containment scoring.
ONSET_AGES = tuple(f"{n} years" for n in range(2, 10))

INJURIES = (
    "displaced supracondylar humerus fracture",
    "grade 2 ankle sprain",
    "closed head injury without loss of consciousness",
    "second-degree scald burn of the forearm",
    "anterior shoulder dislocation",
    "greenstick fracture of the distal radius",
    "laceration of the right eyebrow",
    "avulsion of the nail bed",
    "clavicle fracture from a bicycle fall",
    "concussion sustained during soccer",
    "nursemaid's elbow",
    "tibial shaft stress fracture",
)

_FIRST_NAMES = (
    "Alex", "Jordan", "Sam", "Riley", "Casey", "Morgan", "Quinn", "Avery",
    "Jamie", "Taylor", "Devon", "Rowan", "Elliot", "Marley", "Reese", "Skyler",
)
_LAST_NAMES = (
    "Smith", "Garcia", "Chen", "Patel", "Johnson", "Nguyen", "Williams",
    "Brown", "Davis", "Martinez", "Kim", "Lopez", "Anderson", "Thomas",
)
_DEPARTMENTS = (
    "Main Campus", "North Clinic", "Westside Specialty Care", "Day Medicine",
)

_FILLER = (
    "Vital signs were reviewed and are within expected limits for age.",
    "The family's questions were answered at length during the visit.",
    "Medication reconciliation was completed with the caregiver present.",
    "The patient is tolerating the current regimen without new complaints.",
    "Follow-up labs were ordered and results will be routed to the care team.",
    "Growth parameters continue to track along established percentiles.",
    "The care plan was discussed with the covering attending.",
    "School accommodations were reviewed and the letter was updated.",
    "No new allergies were reported since the last encounter.",
    "Immunizations were reviewed and are up to date.",
)


@dataclass(frozen=True)
class PlantedFact:
    mrn: str
    note_id: int
    fact_type: str  # condition | onset_age | injury
    question: str
    answer: str
    statement: str  # the sentence planted verbatim in the note


def _fact_sentences(rng: random.Random, mrn: str):
    condition = rng.choice(CONDITIONS)
    onset_age = rng.choice(ONSET_AGES)
    injury = rng.choice(INJURIES)
    return [
        (
            "condition",
            "Which documented diagnosis does this patient carry?",
            condition,
            f"The oncology and subspecialty history is notable for a confirmed diagnosis of {condition}.",
        ),
        (
            "onset_age",
            "At what age did this patient's primary condition first present?",
            onset_age,
            f"Symptoms were first documented at {onset_age} of age per the referring record.",
        ),
        (
            "injury",
            "Which injury is documented in this patient's history?",
            injury,
            f"Prior trauma history includes a {injury} managed conservatively.",
        ),
    ]


def generate_synthetic_corpus(
    spec: SyntheticCorpusSpec, out_dir: str
) -> tuple[str, str]:
    """Write notes.jsonl and facts.jsonl under out_dir; returns their paths."""
    rng = random.Random(spec.seed)
    os.makedirs(out_dir, exist_ok=True)
    notes_path = os.path.join(out_dir, "notes.jsonl")
    facts_path = os.path.join(out_dir, "facts.jsonl")

    d0 = date.fromisoformat(spec.date_range[0])
    d1 = date.fromisoformat(spec.date_range[1])
    span_days = (d1 - d0).days

    note_id = 100_000
    with open(notes_path, "w", encoding="utf-8") as nf, open(
        facts_path, "w", encoding="utf-8"
    ) as ff:
        for p in range(spec.num_patients):
            mrn = format(p + 1, "06d")
            name = f"{rng.choice(_FIRST_NAMES)} {rng.choice(_LAST_NAMES)}"
            birth = d0 - timedelta(days=rng.randint(365, 365 * 18))
            sex = rng.choice(("F", "M"))
            patient = Patient(
                mrn=mrn, name=name, birth_date=birth.isoformat(), sex=sex
            )
            n_notes = rng.randint(*spec.notes_per_patient)
            facts = _fact_sentences(rng, mrn)
            fact_slots = sorted(
                rng.sample(range(n_notes), min(len(facts), n_notes))
            )
            fact_iter = iter(facts)
            assigned = {slot: next(fact_iter) for slot in fact_slots}
            leftover = list(fact_iter)  # when a patient has fewer notes than facts

            for i in range(n_notes):
                filed = datetime.combine(
                    d0 + timedelta(days=rng.randint(0, span_days)), datetime.min.time()
                ) + timedelta(seconds=rng.randint(0, 86399))
                stamp = filed.isoformat(sep="T", timespec="seconds")
                planted = [assigned[i]] if i in assigned else []
                if i == n_notes - 1 and leftover:
                    planted.extend(leftover)
                body = _compose_note(rng, name, planted)
                record = NoteRecord(
                    note_id=note_id,
                    text=body,
                    patient=patient,
                    note_category=rng.choice(spec.note_categories),
                    encounter_type=rng.choice(spec.encounter_types),
                    department=rng.choice(_DEPARTMENTS),
                    specialty=rng.choice(spec.specialties),
                    author=Author(
                        name=f"{rng.choice(_FIRST_NAMES)} {rng.choice(_LAST_NAMES)}, {rng.choice(('MD', 'DO', 'RN', 'PA-C'))}",
                        role=rng.choice(spec.author_roles),
                    ),
                    filed_time=stamp,
                    creation_time=stamp,
                )
                nf.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                for fact_type, question, answer, statement in planted:
                    ff.write(
                        json.dumps(
                            {
                                "mrn": mrn,
                                "note_id": note_id,
                                "fact_type": fact_type,
                                "question": question,
                                "answer": answer,
                                "statement": statement,
                            },
                            ensure_ascii=False,
                        )
                        + "\n"
                    )
                note_id += 1
    return notes_path, facts_path


def _compose_note(rng: random.Random, patient_name: str, planted) -> str:
    sections = []
    sections.append(
        f"CHIEF COMPLAINT\n{patient_name} presents for scheduled follow-up.\n"
    )
    hpi = [rng.choice(_FILLER) for _ in range(rng.randint(2, 5))]
    for _, _, _, statement in planted:
        hpi.insert(rng.randint(0, len(hpi)), statement)
    sections.append("HISTORY OF PRESENT ILLNESS\n" + " ".join(hpi) + "\n")
    # Roughly a third of notes run long enough to split into several
    # chunks; the rest stay single-chunk.
    n_exam = rng.randint(25, 45) if rng.random() < 0.35 else rng.randint(1, 3)
    exam = [rng.choice(_FILLER) for _ in range(n_exam)]
    sections.append("INTERVAL HISTORY AND EXAM\n" + " ".join(exam) + "\n")
    plan = [rng.choice(_FILLER) for _ in range(rng.randint(1, 3))]
    sections.append("ASSESSMENT AND PLAN\n" + " ".join(plan))
    return "\n".join(sections)


def read_facts(path: str) -> list[PlantedFact]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PlantedFact(**json.loads(line)))
    return out


# --------------------------------------------------------------------------
# Partitioned pipeline


@dataclass
class PartitionManifest:
    partition_key: str
    note_count: int
    chunk_count: int
    status: str  # pending | embedded | indexed | failed
    checksums: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    _ORDER = ("pending", "embedded", "indexed")

    def advance(self, status: str) -> None:
        if status == "failed":
            self.status = status
            return
        # a failed partition may recover to any forward stage on re-run
        if self.status in self._ORDER and self._ORDER.index(status) < self._ORDER.index(
            self.status
        ):
            raise ValueError(
                f"manifest status may not move backwards ({self.status} -> {status})"
            )
        self.status = status

    def to_dict(self) -> dict:
        return {
            "partition_key": self.partition_key,
            "note_count": self.note_count,
            "chunk_count": self.chunk_count,
            "status": self.status,
            "checksums": self.checksums,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PartitionManifest":
        return cls(**d)


@dataclass(frozen=True)
class UpdateReport:
    added_notes: int
    added_chunks: int
    skipped_note_ids: tuple[int, ...]


class IngestPipeline:
    def __init__(
        self,
        notes_path: str,
        state_dir: str,
        embedder: EmbeddingProvider,
        index: PartitionedIndex,
        store: NoteStore,
        chunking: ChunkingConfig | None = None,
        embed_batch: int = 256,
    ):
        self.notes_path = notes_path
        self.state_dir = state_dir
        self.embedder = embedder
        self.index = index
        self.store = store
        self.chunking = chunking or ChunkingConfig()
        self.embed_batch = embed_batch
        os.makedirs(state_dir, exist_ok=True)

    # -- corpus access -------------------------------------------------------

    def _iter_notes(self):
        with open(self.notes_path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield NoteRecord.from_dict(json.loads(line))

    def partition_keys(self) -> list[str]:
        return sorted({partition_key_for(r) for r in self._iter_notes()})

    def load_partition(self, key: str) -> list[NoteRecord]:
        return [r for r in self._iter_notes() if partition_key_for(r) == key]

    def sample_chunk_texts(self, limit: int = 4096) -> list[str]:
        """First `limit` chunk texts in corpus order, for centroid training."""
        texts: list[str] = []
        for record in self._iter_notes():
            for chunk in chunk_note(record.note_id, record.text, self.chunking):
                texts.append(chunk.text)
                if len(texts) >= limit:
                    return texts
        return texts

    # -- manifest persistence --------------------------------------------------

    def _manifest_path(self, key: str) -> str:
        return os.path.join(self.state_dir, f"{key}.manifest.json")

    def _cache_path(self, key: str) -> str:
        return os.path.join(self.state_dir, f"{key}.vectors.npz")

    def read_manifest(self, key: str) -> PartitionManifest | None:
        path = self._manifest_path(key)
        if not os.path.exists(path):
            return None
        with open(path, "r", encoding="utf-8") as fh:
            return PartitionManifest.from_dict(json.load(fh))

    def _write_manifest(self, manifest: PartitionManifest) -> None:
        tmp = self._manifest_path(manifest.partition_key) + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(manifest.to_dict(), fh, ensure_ascii=False, sort_keys=True)
        os.replace(tmp, self._manifest_path(manifest.partition_key))

    # -- stages ----------------------------------------------------------------

    def run_partition(self, key: str) -> PartitionManifest:
        records = self.load_partition(key)
        manifest = self.read_manifest(key)
        notes_sha = _records_checksum(records)
        if manifest is None:
            manifest = PartitionManifest(
                partition_key=key,
                note_count=len(records),
                chunk_count=sum(
                    count_chunks(len(tokenize(r.text)), self.chunking)
                    for r in records
                ),
                status="pending",
                checksums={"notes": notes_sha},
            )
        if manifest.checksums.get("notes") != notes_sha:
            raise ValueError(
                f"partition {key} changed on disk since its manifest was written"
            )
        if manifest.status == "indexed":
            return manifest

        try:
            manifest.error = None
            if not os.path.exists(self._cache_path(key)):
                chunk_ids, note_ids, texts = self._chunk_partition(records)
                vectors = self._embed(texts)
                np.savez(
                    self._cache_path(key),
                    chunk_ids=np.array(chunk_ids, dtype=str),
                    note_ids=np.array(note_ids, dtype=np.int64),
                    vectors=vectors,
                )
                manifest.checksums["vectors"] = _file_checksum(self._cache_path(key))
            manifest.advance("embedded")
            self._write_manifest(manifest)

            with np.load(self._cache_path(key)) as cache:
                self._insert(records, cache)
            manifest.advance("indexed")
            self._write_manifest(manifest)
            return manifest
        except Exception as e:
            manifest.error = f"{type(e).__name__}: {e}"
            manifest.advance("failed")
            self._write_manifest(manifest)
            raise

    def run_all(self) -> list[PartitionManifest]:
        return [self.run_partition(key) for key in self.partition_keys()]

    def _chunk_partition(self, records: list[NoteRecord]):
        chunk_ids: list[str] = []
        note_ids: list[int] = []
        texts: list[str] = []
        for r in records:
            for chunk in chunk_note(r.note_id, r.text, self.chunking):
                chunk_ids.append(chunk.chunk_id)
                note_ids.append(r.note_id)
                texts.append(chunk.text)
        return chunk_ids, note_ids, texts

    def _embed(self, texts: list[str]) -> np.ndarray:
        parts = []
        for lo in range(0, len(texts), self.embed_batch):
            parts.append(self.embedder.embed_documents(texts[lo : lo + self.embed_batch]))
        if not parts:
            return np.empty((0, 0), dtype=np.float32)
        return np.concatenate(parts)

    def _insert(self, records: list[NoteRecord], cache) -> None:
        attrs_by_note = {r.note_id: note_attributes(r) for r in records}
        entries = []
        for cid, nid, vec in zip(
            cache["chunk_ids"], cache["note_ids"], cache["vectors"]
        ):
            if self.index.contains_chunk(str(cid)):
                continue  # already inserted by an interrupted earlier run
            entries.append(
                VectorEntry(
                    chunk_id=str(cid),
                    note_id=int(nid),
                    vector=vec,
                    attributes=attrs_by_note[int(nid)],
                )
            )
        if entries:
            self.index.insert(entries)
        self.store.put_notes(records)

    # -- incremental updates -----------------------------------------------------

    def incremental_update(self, records: list[NoteRecord]) -> UpdateReport:
        skipped = []
        fresh = []
        for r in records:
            if self.store.has_note(r.note_id) or self.index.contains_chunk(
                f"{r.note_id}:0"
            ):
                skipped.append(r.note_id)
            else:
                fresh.append(r)
        if not fresh:
            return UpdateReport(0, 0, tuple(skipped))
        chunk_ids, note_ids, texts = self._chunk_partition(fresh)
        vectors = self._embed(texts)
        attrs_by_note = {r.note_id: note_attributes(r) for r in fresh}
        entries = [
            VectorEntry(
                chunk_id=cid,
                note_id=nid,
                vector=vec,
                attributes=attrs_by_note[nid],
            )
            for cid, nid, vec in zip(chunk_ids, note_ids, vectors)
        ]
        self.index.insert(entries)
        self.store.put_notes(fresh)
        return UpdateReport(len(fresh), len(entries), tuple(skipped))


def _records_checksum(records: list[NoteRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True).encode())
    return h.hexdigest()


def _file_checksum(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
