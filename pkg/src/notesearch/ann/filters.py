"""Filterable attributes and query-time filter specs.

The filterable field set is closed: seven categorical fields and two
numeric fields. Filters are ANDed across fields; within one field's
include-set the match is OR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

CATEGORICAL_FIELDS = (
    "patient_id",
    "note_category",
    "encounter_type",
    "department",
    "specialty",
    "author_type",
    "author_name",
)

NUMERIC_FIELDS = (
    "date",  # days since epoch of the note's filed time
    "age_days",  # patient age in days at authorship
)


class FilterError(ValueError):
    """Malformed filter: unknown field or inconsistent clauses."""


@dataclass(frozen=True)
class AttributeSet:
    categorical: dict[str, str] = field(default_factory=dict)
    numeric: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.categorical:
            if name not in CATEGORICAL_FIELDS:
                raise FilterError(f"unknown categorical field: {name!r}")
        for name in self.numeric:
            if name not in NUMERIC_FIELDS:
                raise FilterError(f"unknown numeric field: {name!r}")


@dataclass(frozen=True)
class FilterSpec:
    include: dict[str, frozenset[str]] = field(default_factory=dict)
    exclude: dict[str, frozenset[str]] = field(default_factory=dict)
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in list(self.include) + list(self.exclude):
            if name not in CATEGORICAL_FIELDS:
                raise FilterError(f"unknown categorical field: {name!r}")
        for name, (lo, hi) in self.ranges.items():
            if name not in NUMERIC_FIELDS:
                raise FilterError(f"unknown numeric field: {name!r}")
            if lo > hi:
                raise FilterError(f"range min > max for field {name!r}")
        for name in self.include:
            if name in self.exclude and self.include[name] & self.exclude[name]:
                raise FilterError(
                    f"include and exclude sets overlap for field {name!r}"
                )
        # Normalize to hashable frozensets regardless of caller input.
        object.__setattr__(
            self, "include", {k: frozenset(v) for k, v in self.include.items()}
        )
        object.__setattr__(
            self, "exclude", {k: frozenset(v) for k, v in self.exclude.items()}
        )
        object.__setattr__(
            self,
            "ranges",
            {k: (float(lo), float(hi)) for k, (lo, hi) in self.ranges.items()},
        )

    def is_empty(self) -> bool:
        return not (self.include or self.exclude or self.ranges)

    def matches(self, attrs: AttributeSet) -> bool:
        """Reference (scalar) filter evaluation; the index uses a vectorized
        equivalent. A missing attribute fails include and range clauses and
        passes exclude clauses."""
        for name, tokens in self.include.items():
            if attrs.categorical.get(name) not in tokens:
                return False
        for name, tokens in self.exclude.items():
            if attrs.categorical.get(name) in tokens:
                return False
        for name, (lo, hi) in self.ranges.items():
            value = attrs.numeric.get(name)
            if value is None or not (lo <= value <= hi):
                return False
        return True

    def to_json(self) -> dict:
        return {
            "include": {k: sorted(v) for k, v in sorted(self.include.items())},
            "exclude": {k: sorted(v) for k, v in sorted(self.exclude.items())},
            "ranges": {k: [lo, hi] for k, (lo, hi) in sorted(self.ranges.items())},
        }

    @classmethod
    def from_json(cls, data: dict) -> "FilterSpec":
        if not isinstance(data, dict):
            raise FilterError("filter must be an object")
        unknown = set(data) - {"include", "exclude", "ranges"}
        if unknown:
            raise FilterError(f"unknown filter section: {sorted(unknown)[0]!r}")
        include = {
            k: frozenset(map(str, v)) for k, v in (data.get("include") or {}).items()
        }
        exclude = {
            k: frozenset(map(str, v)) for k, v in (data.get("exclude") or {}).items()
        }
        ranges = {}
        for k, v in (data.get("ranges") or {}).items():
            if not isinstance(v, (list, tuple)) or len(v) != 2:
                raise FilterError(f"range for field {k!r} must be [min, max]")
            ranges[k] = (float(v[0]), float(v[1]))
        return cls(include=include, exclude=exclude, ranges=ranges)
