"""Step records, scenario identity and record-file I/O.

A step record is one parsed Gherkin step with its provenance. Records travel
between pipeline stages as JSONL (one object per line) or RFC-4180 CSV with a
mandatory header row; field names are fixed by ``RECORD_FIELDS``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable

from .errors import SchemaError

KEYWORDS = ("Given", "When", "Then", "And", "But", "Star")

RECORD_FIELDS = (
    "repo_slug",
    "file_path",
    "scenario",
    "keyword",
    "text",
    "cluster_id",
    "is_background",
    "is_outline",
)

_MANDATORY = tuple(f for f in RECORD_FIELDS if f != "cluster_id")


@dataclass(frozen=True)
class StepRecord:
    repo_slug: str
    file_path: str
    scenario: str
    keyword: str
    text: str
    cluster_id: str | None = None
    is_background: bool = False
    is_outline: bool = False

    def with_cluster(self, cluster_id: str) -> "StepRecord":
        return replace(self, cluster_id=cluster_id)

    @property
    def key(self) -> "ScenarioKey":
        return ScenarioKey(self.repo_slug, self.file_path, self.scenario)


@dataclass(frozen=True, order=True)
class ScenarioKey:
    repo_slug: str
    file_path: str
    scenario: str


def owner_of(repo_slug: str) -> str:
    """Upstream owner: the segment before the first underscore of repo_slug.

    Degenerate slugs (leading underscore, no underscore) fall back to the
    whole slug so the owner is never empty.
    """
    head = repo_slug.split("_", 1)[0]
    return head or repo_slug


def record_to_dict(record: StepRecord) -> dict:
    return {
        "repo_slug": record.repo_slug,
        "file_path": record.file_path,
        "scenario": record.scenario,
        "keyword": record.keyword,
        "text": record.text,
        "cluster_id": record.cluster_id,
        "is_background": record.is_background,
        "is_outline": record.is_outline,
    }


def _parse_bool(value, row: int, field: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("true", "1"):
            return True
        if low in ("false", "0"):
            return False
    raise SchemaError(row, field)


def _record_from_mapping(obj: dict, row: int) -> StepRecord:
    for field in _MANDATORY:
        if field not in obj or obj[field] is None:
            raise SchemaError(row, field)
    repo_slug = str(obj["repo_slug"])
    file_path = str(obj["file_path"])
    keyword = str(obj["keyword"])
    text = str(obj["text"]).strip()
    if not repo_slug:
        raise SchemaError(row, "repo_slug")
    if not file_path.endswith(".feature"):
        raise SchemaError(row, "file_path")
    if keyword not in KEYWORDS:
        raise SchemaError(row, "keyword")
    if not text:
        raise SchemaError(row, "text")
    cluster_id = obj.get("cluster_id")
    if cluster_id in (None, ""):
        cluster_id = None
    else:
        cluster_id = str(cluster_id)
    return StepRecord(
        repo_slug=repo_slug,
        file_path=file_path,
        scenario=str(obj["scenario"]),
        keyword=keyword,
        text=text,
        cluster_id=cluster_id,
        is_background=_parse_bool(obj["is_background"], row, "is_background"),
        is_outline=_parse_bool(obj["is_outline"], row, "is_outline"),
    )


def load_step_records(path: str | Path) -> list[StepRecord]:
    """Load step records from a JSONL or CSV file (chosen by extension).

    Rows are validated; the first offending row raises SchemaError with its
    0-based data-row index and the field name.
    """
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _load_csv(path)
    return _load_jsonl(path)


def _load_jsonl(path: Path) -> list[StepRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        row = 0
        for line in fh:
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(row, "json") from exc
            if not isinstance(obj, dict):
                raise SchemaError(row, "json")
            records.append(_record_from_mapping(obj, row))
            row += 1
    return records


def _load_csv(path: Path) -> list[StepRecord]:
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = [f for f in _MANDATORY if f not in reader.fieldnames]
        if missing:
            raise SchemaError(0, missing[0])
        for row, obj in enumerate(reader):
            records.append(_record_from_mapping(obj, row))
    return records


def write_step_records(path: str | Path, records: Iterable[StepRecord]) -> None:
    """Write records as JSONL or CSV depending on the target extension."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=RECORD_FIELDS)
            writer.writeheader()
            for rec in records:
                obj = record_to_dict(rec)
                obj["cluster_id"] = obj["cluster_id"] or ""
                obj["is_background"] = "true" if obj["is_background"] else "false"
                obj["is_outline"] = "true" if obj["is_outline"] else "false"
                writer.writerow(obj)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(record_to_dict(rec), sort_keys=True))
                fh.write("\n")


def group_scenarios(records: Iterable[StepRecord]) -> dict[ScenarioKey, list[StepRecord]]:
    """Group non-background records by scenario key.

    Records are stably ordered by (repo_slug, file_path) first, so the result
    is independent of the order files were parsed in; within a file the source
    order is preserved.
    """
    ordered = sorted(
        (rec for rec in records if not rec.is_background),
        key=lambda r: (r.repo_slug, r.file_path),
    )
    groups: dict[ScenarioKey, list[StepRecord]] = {}
    for rec in ordered:
        groups.setdefault(rec.key, []).append(rec)
    return groups
