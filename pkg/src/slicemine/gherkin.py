"""Line-based parser for English-keyword Gherkin ``.feature`` files.

The parser emits one StepRecord per step in document order. It deliberately
does not build a full AST: tags and comments are skipped, doc-strings and data
tables attach to the preceding step (and are excluded from the step text), and
``Scenario Outline`` bodies are kept as written with their ``<param>``
placeholders. Non-English ``# language:`` headers are rejected.
"""

from __future__ import annotations

import re

from .errors import MalformedGherkin
from .records import StepRecord

_STEP_KEYWORDS = (
    ("Given ", "Given"),
    ("When ", "When"),
    ("Then ", "Then"),
    ("And ", "And"),
    ("But ", "But"),
    ("* ", "Star"),
)

_HEADER = re.compile(
    r"^(Feature|Background|Scenario Outline|Scenario Template|Scenario|Example|Rule)\s*:(.*)$"
)
_EXAMPLES = re.compile(r"^(Examples|Scenarios)\s*:")
_LANGUAGE = re.compile(r"^#\s*language\s*:\s*(\S+)", re.IGNORECASE)


def parse_feature_file(source_text: str, repo_slug: str, file_path: str) -> list[StepRecord]:
    """Parse one feature file into step records.

    Raises MalformedGherkin (with a line number) on an unterminated doc-string,
    a step before any Feature/Scenario header, or a non-English language
    directive. Free text between headers is treated as description and skipped.
    """
    records: list[StepRecord] = []
    container: str | None = None  # None | "background" | "scenario" | "outline"
    scenario_name = ""
    doc_open_line = 0
    name_counts: dict[str, int] = {}

    lines = source_text.splitlines()
    i = 0
    n = len(lines)
    while i < n:
        raw = lines[i]
        line = raw.strip()
        lineno = i + 1
        i += 1

        if not line:
            continue

        if line.startswith('"""'):
            # Doc-string: skip content up to the closing delimiter.
            doc_open_line = lineno
            closed = False
            while i < n:
                if lines[i].strip().startswith('"""'):
                    i += 1
                    closed = True
                    break
                i += 1
            if not closed:
                raise MalformedGherkin("unterminated doc-string", doc_open_line)
            continue

        if line.startswith("#"):
            lang = _LANGUAGE.match(line)
            if lang and lang.group(1).lower() not in ("en",):
                raise MalformedGherkin(
                    f"unsupported language {lang.group(1)!r}", lineno
                )
            continue

        if line.startswith("@"):
            continue

        if line.startswith("|"):
            # Data-table row (attached to the preceding step) or Examples row;
            # excluded from step text either way.
            continue

        if _EXAMPLES.match(line):
            continue

        header = _HEADER.match(line)
        if header:
            kind = header.group(1)
            name = header.group(2).strip()
            if kind == "Feature":
                container = None
            elif kind == "Rule":
                container = None
            elif kind == "Background":
                container = "background"
                scenario_name = ""
            else:
                container = "outline" if kind in ("Scenario Outline", "Scenario Template") else "scenario"
                scenario_name = _disambiguate(name, name_counts)
            continue

        step = _match_step(line)
        if step is not None:
            keyword, text = step
            if container is None:
                raise MalformedGherkin("step before any Feature/Scenario header", lineno)
            records.append(
                StepRecord(
                    repo_slug=repo_slug,
                    file_path=file_path,
                    scenario="" if container == "background" else scenario_name,
                    keyword=keyword,
                    text=text,
                    cluster_id=None,
                    is_background=container == "background",
                    is_outline=container == "outline",
                )
            )
            continue

        # Anything else is description text; ignore.

    return records


def _match_step(line: str) -> tuple[str, str] | None:
    for prefix, keyword in _STEP_KEYWORDS:
        if line.startswith(prefix):
            text = line[len(prefix):].strip()
            if text:
                return keyword, text
            return None
    return None


def _disambiguate(name: str, counts: dict[str, int]) -> str:
    """Keep scenario keys unique within a file.

    The k-th occurrence (k >= 2) of a non-empty name gets a ``#k`` suffix;
    unnamed scenarios stay empty so the empty-name audit drop still applies.
    """
    if not name:
        return ""
    counts[name] = counts.get(name, 0) + 1
    k = counts[name]
    return name if k == 1 else f"{name}#{k}"
