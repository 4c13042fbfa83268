"""External judge harness: prompt construction, querying, verdict parsing.

The judge is any OpenAI-compatible chat-completion endpoint, configured via
the JUDGE_ENDPOINT / JUDGE_TOKEN / JUDGE_MODEL environment variables. Queries
run at temperature 0 with exponential-backoff retries; per-item request and
response logs are kept as an audit trail. The response parser tolerates
markdown fences and prose around the verdict JSON; unparseable responses are
counted separately, never as negatives.
"""

from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import requests

from .agreement import cohen_kappa, fleiss_kappa
from .errors import AuthError, DegenerateMarginals, JudgeUnavailable
from .labeling import AggregatedLabel, EXTRACTION_VALUES, MECHANISM_VALUES

DEFAULT_RUBRIC = """\
Decide whether the recurring step slice below is worth extracting into a reuse
mechanism. Positive criteria (B-1..B-5): stable setup or assertion context,
recurrence across scenarios or files, coherent self-contained intent, savings
at every call site, meaningful step content. Negative criteria (N-1..N-5):
generated or templated spec-suite text, incidental co-occurrence, too little
content to be worth a call site, order-dependent fragments, placeholder-heavy
parameter sweeps. Answer flagged_spec when the slice looks generator-produced;
answer uncertain when the evidence is genuinely ambiguous.
"""

_FENCE = re.compile(r"```[a-zA-Z]*\n?|```")


@dataclass
class JudgeConfig:
    endpoint: str
    token: str
    model: str
    max_attempts: int = 3
    backoff_base: float = 1.0
    timeout: float = 60.0
    max_in_flight: int = 4

    @classmethod
    def from_env(cls) -> "JudgeConfig":
        endpoint = os.environ.get("JUDGE_ENDPOINT", "")
        if not endpoint:
            raise JudgeUnavailable("JUDGE_ENDPOINT is not set")
        return cls(
            endpoint=endpoint,
            token=os.environ.get("JUDGE_TOKEN", ""),
            model=os.environ.get("JUDGE_MODEL", ""),
        )


@dataclass
class JudgeVerdict:
    pattern_ref: str
    model_name: str
    extraction_worthy: str | None
    mechanism: str | None
    raw_response: str
    parse_ok: bool
    latency_s: float = 0.0


def build_prompt(pattern_info: dict, rubric_text: str = DEFAULT_RUBRIC) -> str:
    """Deterministic prompt: rubric, step texts, metrics, output schema.

    ``pattern_info`` carries canonical_texts plus the recurrence metrics
    (support_total, max_within_file_recurrence, max_within_repo_files,
    n_distinct_orgs, n_distinct_repos, outlier_fraction).
    """
    lines = [rubric_text.rstrip(), "", "Step slice:"]
    for text in pattern_info["canonical_texts"]:
        lines.append(f"  {text}")
    lines.append("")
    lines.append("Recurrence signals:")
    for key in (
        "support_total",
        "max_within_file_recurrence",
        "max_within_repo_files",
        "n_distinct_orgs",
        "n_distinct_repos",
        "outlier_fraction",
    ):
        lines.append(f"  {key}: {pattern_info[key]}")
    lines.append("")
    lines.append(
        "Reply with a JSON object holding an extraction_worthy field "
        '(one of "yes", "no", "uncertain", "flagged_spec") and a mechanism '
        'field (one of "background", "reusable_scenario", '
        '"shared_higher_level_step", "unsure", "not_applicable").'
    )
    return "\n".join(lines)


def query_judge(prompt: str, config: JudgeConfig) -> tuple[str, float]:
    """POST one chat completion at temperature 0; returns (content, latency).

    Retries transient failures (429 / 5xx / connection errors) with
    exponential backoff up to ``max_attempts``; auth failures never retry.
    When the body is not a chat-completion envelope it is captured verbatim.
    """
    payload = {
        "model": config.model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": 0,
    }
    headers = {"Content-Type": "application/json"}
    if config.token:
        headers["Authorization"] = f"Bearer {config.token}"

    last_error: Exception | None = None
    for attempt in range(config.max_attempts):
        if attempt:
            time.sleep(config.backoff_base * 2 ** (attempt - 1))
        started = time.monotonic()
        try:
            resp = requests.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout
            )
        except requests.RequestException as exc:
            last_error = exc
            continue
        latency = time.monotonic() - started
        if resp.status_code in (401, 403):
            raise AuthError(f"judge endpoint returned {resp.status_code}")
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = JudgeUnavailable(f"HTTP {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise JudgeUnavailable(f"HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.text
        try:
            envelope = resp.json()
            content = envelope["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            content = body
        return content, latency
    raise JudgeUnavailable(f"gave up after {config.max_attempts} attempts: {last_error}")


def _balanced_objects(text: str):
    """Yield top-level {...} spans, tracking strings so braces inside them
    do not break the balance."""
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    yield text[start : i + 1]


def _normalize_enum(value, allowed: Sequence[str]) -> str | None:
    if not isinstance(value, str):
        return None
    cleaned = value.strip().lower().replace("-", "_").replace(" ", "_")
    if cleaned in ("n/a", "na", "none"):
        cleaned = "not_applicable"
    return cleaned if cleaned in allowed else None


def parse_verdict(raw: str, pattern_ref: str = "", model_name: str = "") -> JudgeVerdict:
    """Extract the first balanced JSON object carrying an extraction_worthy key.

    Code fences are stripped first; enum values are normalized
    case-insensitively. Anything unparseable yields parse_ok=False with the
    verdict fields absent.
    """
    stripped = _FENCE.sub("", raw)
    for candidate in _balanced_objects(stripped):
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(obj, dict) or "extraction_worthy" not in obj:
            continue
        extraction = _normalize_enum(obj["extraction_worthy"], EXTRACTION_VALUES)
        if extraction is None:
            continue
        mechanism = _normalize_enum(obj.get("mechanism"), MECHANISM_VALUES)
        return JudgeVerdict(
            pattern_ref=pattern_ref,
            model_name=model_name,
            extraction_worthy=extraction,
            mechanism=mechanism,
            raw_response=raw,
            parse_ok=True,
        )
    return JudgeVerdict(
        pattern_ref=pattern_ref,
        model_name=model_name,
        extraction_worthy=None,
        mechanism=None,
        raw_response=raw,
        parse_ok=False,
    )


def judge_pool(
    pool_items: Sequence[dict],
    config: JudgeConfig,
    rubric_text: str = DEFAULT_RUBRIC,
    log_path=None,
) -> list[JudgeVerdict]:
    """Judge every pool item with bounded concurrency; output is ordered by
    pattern_ref regardless of completion order."""

    def run(item: dict) -> JudgeVerdict:
        prompt = build_prompt(item, rubric_text)
        content, latency = query_judge(prompt, config)
        verdict = parse_verdict(content, item["pattern_ref"], config.model)
        verdict.latency_s = latency
        return verdict

    with ThreadPoolExecutor(max_workers=config.max_in_flight) as pool:
        verdicts = list(pool.map(run, pool_items))
    verdicts.sort(key=lambda v: v.pattern_ref)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8", newline="\n") as fh:
            for v in verdicts:
                fh.write(json.dumps({
                    "pattern_ref": v.pattern_ref,
                    "model_name": v.model_name,
                    "extraction_worthy": v.extraction_worthy,
                    "mechanism": v.mechanism,
                    "raw_response": v.raw_response,
                    "parse_ok": v.parse_ok,
                    "latency_s": v.latency_s,
                }, sort_keys=True))
                fh.write("\n")
    return verdicts


@dataclass
class JudgeReport:
    n_items: int
    n_unparseable: int
    binary_accuracy: float
    binary_kappa: float
    f1_yes: float
    mechanism_accuracy: float | None
    n_mechanism: int
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "n_items": self.n_items,
            "n_unparseable": self.n_unparseable,
            "binary_accuracy": self.binary_accuracy,
            "binary_kappa": self.binary_kappa,
            "f1_yes": self.f1_yes,
            "mechanism_accuracy": self.mechanism_accuracy,
            "n_mechanism": self.n_mechanism,
        }
        out.update(self.extra)
        return out


def judge_agreement(
    verdicts: Sequence[JudgeVerdict], human: Sequence[AggregatedLabel]
) -> JudgeReport:
    """Compare one judge against the human aggregated labels.

    Binary collapse is yes-vs-rest on the non-tie subset; unparseable items
    are excluded from every denominator and reported separately. Mechanism
    accuracy is conditional on both sides saying yes.
    """
    human_by_ref = {h.pattern_ref: h for h in human}
    paired = []
    unparseable = 0
    for v in verdicts:
        h = human_by_ref.get(v.pattern_ref)
        if h is None or h.extraction_majority == "tie":
            continue
        if not v.parse_ok:
            unparseable += 1
            continue
        paired.append((v, h))

    n = len(paired)
    if n == 0:
        return JudgeReport(0, unparseable, 0.0, 0.0, 0.0, None, 0)

    judge_bin = [1 if v.extraction_worthy == "yes" else 0 for v, _ in paired]
    human_bin = [1 if h.extraction_majority == "yes" else 0 for _, h in paired]
    agree = sum(1 for a, b in zip(judge_bin, human_bin) if a == b)
    accuracy = agree / n
    try:
        kappa = cohen_kappa(judge_bin, human_bin, (0, 1))
    except DegenerateMarginals:
        kappa = float("nan")
    tp = sum(1 for a, b in zip(judge_bin, human_bin) if a == 1 and b == 1)
    fp = sum(1 for a, b in zip(judge_bin, human_bin) if a == 1 and b == 0)
    fn = sum(1 for a, b in zip(judge_bin, human_bin) if a == 0 and b == 1)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    both_yes = [
        (v, h)
        for v, h in paired
        if v.extraction_worthy == "yes" and h.extraction_majority == "yes"
        and h.mechanism_majority not in (None, "unsure") and v.mechanism is not None
    ]
    mech_acc = None
    if both_yes:
        mech_acc = sum(
            1 for v, h in both_yes if v.mechanism == h.mechanism_majority
        ) / len(both_yes)

    return JudgeReport(
        n_items=n,
        n_unparseable=unparseable,
        binary_accuracy=accuracy,
        binary_kappa=kappa,
        f1_yes=f1,
        mechanism_accuracy=mech_acc,
        n_mechanism=len(both_yes),
    )


def inter_judge_kappa(verdict_sets: Sequence[Sequence[JudgeVerdict]]) -> dict:
    """Fleiss' kappa across judges, on items every judge parsed."""
    if len(verdict_sets) < 2:
        raise ValueError("need at least 2 judges")
    by_model = []
    for verdicts in verdict_sets:
        by_model.append({v.pattern_ref: v for v in verdicts if v.parse_ok})
    refs = sorted(set.intersection(*(set(m) for m in by_model)))
    four_cat = [[m[ref].extraction_worthy for m in by_model] for ref in refs]
    binary = [
        [1 if m[ref].extraction_worthy == "yes" else 0 for m in by_model]
        for ref in refs
    ]
    out = {"n_items": len(refs)}
    try:
        out["fleiss_4cat"] = fleiss_kappa(four_cat, EXTRACTION_VALUES)
    except DegenerateMarginals:
        out["fleiss_4cat"] = float("nan")
    try:
        out["fleiss_binary"] = fleiss_kappa(binary, (0, 1))
    except DegenerateMarginals:
        out["fleiss_binary"] = float("nan")
    return out
