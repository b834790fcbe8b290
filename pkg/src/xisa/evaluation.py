"""Score candidate translations: edit distance, exact match, functional runs.

Functional correctness follows the cross-compile-and-emulate recipe: the
candidate text is assembled and linked against the pair's compiled test
driver using the configured toolchain, then executed under the configured
emulator.  Exit status maps onto TestOutcome; non-Pass outcomes are sorted
into a three-class error taxonomy by a versioned rule cascade.
"""
from __future__ import annotations

import configparser
import json
import signal as signal_module
import subprocess
import tempfile
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .asmtext import (
    DEFAULT_POLICY,
    AssemblyUnit,
    NormalizationPolicy,
    normalize,
    parse_assembly,
    static_register_profile,
)
from .backends import Backend, TranspileRequest
from .core import GenerationParams, IsaName, ToolchainConfig
from .dataset import TranspilePair
from .errors import MismatchedSuites, ToolchainError, XisaError

RESULT_SCHEMA = "xisa.eval_result/v1"
SUMMARY_SCHEMA = "xisa.summary/v1"


# --- Levenshtein -------------------------------------------------------------

def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum single-element insert/delete/substitute count.

    O(len(a)*len(b)) time, one O(min(len)) row of memory.  Works on strings
    (character granularity) and on lists of lines (line granularity).
    """
    if a == b:
        return 0
    # shared prefixes and suffixes never change the distance
    start = 0
    end_a, end_b = len(a), len(b)
    while start < end_a and start < end_b and a[start] == b[start]:
        start += 1
    while end_a > start and end_b > start and a[end_a - 1] == b[end_b - 1]:
        end_a -= 1
        end_b -= 1
    a = a[start:end_a]
    b = b[start:end_b]
    if len(b) > len(a):
        a, b = b, a
    lb = len(b)
    if lb == 0:
        return len(a)
    row = list(range(lb + 1))
    for i, ca in enumerate(a, 1):
        diag = row[0]
        left = row[0] = i
        for j in range(1, lb + 1):
            up = row[j]
            cost = diag if ca == b[j - 1] else diag + 1
            if left + 1 < cost:
                cost = left + 1
            if up + 1 < cost:
                cost = up + 1
            row[j] = left = cost
            diag = up
    return row[lb]


# --- outcome types -----------------------------------------------------------

class OutcomeStatus(str, Enum):
    PASS = "pass"
    TEST_FAILED = "test_failed"
    ASSEMBLE_ERROR = "assemble_error"
    LINK_ERROR = "link_error"
    RUNTIME_CRASH = "runtime_crash"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # not a pytest class, despite the name

    status: OutcomeStatus
    failed_count: int = 0
    signal_name: str = ""

    @property
    def is_pass(self) -> bool:
        return self.status is OutcomeStatus.PASS

    @classmethod
    def passed(cls) -> "TestOutcome":
        return cls(OutcomeStatus.PASS)

    @classmethod
    def test_failed(cls, failed_count: int) -> "TestOutcome":
        return cls(OutcomeStatus.TEST_FAILED, failed_count=failed_count)

    @classmethod
    def crash(cls, signal_name: str) -> "TestOutcome":
        return cls(OutcomeStatus.RUNTIME_CRASH, signal_name=signal_name)

    def describe(self) -> str:
        if self.status is OutcomeStatus.TEST_FAILED:
            return f"test_failed({self.failed_count})"
        if self.status is OutcomeStatus.RUNTIME_CRASH:
            return f"runtime_crash({self.signal_name})"
        return self.status.value


class ErrorClass(str, Enum):
    REGISTER_ALLOCATION = "register_allocation"
    ADDRESSING = "addressing"
    OTHER = "other"


@dataclass(frozen=True)
class EvalResult:
    pair_id: str
    backend_id: str
    edit_distance: int
    exact_match: bool
    outcome: TestOutcome
    error_class: ErrorClass | None
    candidate_index_used: int
    logs: str = ""
    latency_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.exact_match and self.edit_distance != 0:
            raise ValueError("exact_match requires edit_distance == 0")
        if self.outcome.is_pass != (self.error_class is None):
            raise ValueError("error_class present iff outcome is not Pass")


@dataclass(frozen=True)
class SuiteSummary:
    n: int
    avg_edit_distance: float
    exact_match_rate: float
    test_accuracy: float
    error_class_histogram: dict[str, int] = field(default_factory=dict)


def summarize(results: Sequence[EvalResult]) -> SuiteSummary:
    n = len(results)
    if n == 0:
        return SuiteSummary(0, 0.0, 0.0, 0.0, {})
    histogram: dict[str, int] = {}
    for r in results:
        if r.error_class is not None:
            histogram[r.error_class.value] = histogram.get(r.error_class.value, 0) + 1
    return SuiteSummary(
        n=n,
        avg_edit_distance=sum(r.edit_distance for r in results) / n,
        exact_match_rate=sum(r.exact_match for r in results) / n,
        test_accuracy=sum(r.outcome.is_pass for r in results) / n,
        error_class_histogram=dict(sorted(histogram.items())),
    )


# --- syntactic scoring -------------------------------------------------------

def score_syntactic(
    candidate: str,
    ground_truth: str,
    isa: IsaName | str,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    line_level: bool = False,
) -> tuple[int, bool]:
    """Normalize both texts under the same policy, then edit distance + equality.

    Character granularity by default; ``line_level`` computes the distance
    over normalized lines as atoms instead (reported separately, never mixed).
    """
    isa_name = IsaName(isa)
    cand_norm = normalize(parse_assembly(candidate, isa_name), policy)
    truth_norm = normalize(parse_assembly(ground_truth, isa_name), policy)
    if line_level:
        distance = levenshtein(cand_norm.splitlines(), truth_norm.splitlines())
    else:
        distance = levenshtein(cand_norm, truth_norm)
    return distance, cand_norm == truth_norm


# --- functional execution ----------------------------------------------------

_LINK_ERROR_HINTS = (
    "undefined reference",
    "undefined symbol",
    "cannot find entry",
    "duplicate symbol",
    "in function `_start'",
    "ld:",
    "ld.lld:",
    "collect2:",
)


def _signal_name(code: int) -> str:
    try:
        return signal_module.Signals(code).name
    except ValueError:
        return f"SIG{code}"


def run_functional(
    candidate_text: str,
    pair: TranspilePair,
    cfg: ToolchainConfig,
) -> tuple[TestOutcome, str]:
    """Assemble + link the candidate with the pair's test driver, then run it.

    Candidate faults map to TestOutcome; broken infrastructure (missing tools,
    failing test-driver builds) raises ToolchainError instead so harness bugs
    are never scored as translation failures.
    """
    if not pair.test_source_path:
        raise ValueError(f"pair {pair.pair_id} has no test program")
    cmds = cfg.require(pair.target_isa, "assemble_link", "emulate")
    logs: list[str] = []

    def scrub(text: str, td: str) -> str:
        # temp paths vary run to run; records must stay byte-deterministic
        return text.replace(td, "{tmpdir}")

    with tempfile.TemporaryDirectory(prefix="xisa-run-") as td:
        candidate_path = Path(td) / "candidate.s"
        text = candidate_text if candidate_text.endswith("\n") else candidate_text + "\n"
        candidate_path.write_text(text, encoding="utf-8")
        binary_path = Path(td) / "prog"
        mapping = {
            "candidate": str(candidate_path),
            "test_src": pair.test_source_path,
            "output": str(binary_path),
            "tmpdir": td,
            "opt": cfg.optimization_level,
        }

        for step in cmds.assemble_link:
            try:
                proc = run_build_step(step, mapping, cfg.timeout_compile)
            except subprocess.TimeoutExpired:
                if "{candidate}" in step:
                    logs.append(f"$ {step}\n(timed out)")
                    return (
                        TestOutcome(OutcomeStatus.ASSEMBLE_ERROR),
                        "\n".join(logs),
                    )
                raise ToolchainError(
                    f"build step timed out: {step}", command=step
                ) from None
            logs.append(scrub(f"$ {step}\n{proc.stdout}{proc.stderr}".rstrip(), td))
            if proc.returncode == 0:
                continue
            stderr = proc.stderr + proc.stdout
            involves_candidate = "{candidate}" in step
            produces_binary = "{output}" in step
            if involves_candidate and produces_binary:
                link_ish = any(h in stderr.lower() for h in _LINK_ERROR_HINTS)
                status = (
                    OutcomeStatus.LINK_ERROR if link_ish else OutcomeStatus.ASSEMBLE_ERROR
                )
                return TestOutcome(status), "\n".join(logs)
            if involves_candidate:
                return TestOutcome(OutcomeStatus.ASSEMBLE_ERROR), "\n".join(logs)
            if produces_binary:
                return TestOutcome(OutcomeStatus.LINK_ERROR), "\n".join(logs)
            raise ToolchainError(
                f"test-driver build failed ({proc.returncode}): {stderr[:400]}",
                command=step,
            )

        try:
            proc = run_build_step(cmds.emulate, {"input": str(binary_path)}, cfg.timeout_run)
        except subprocess.TimeoutExpired:
            logs.append(f"$ {cmds.emulate}\n(timed out after {cfg.timeout_run}s)")
            return TestOutcome(OutcomeStatus.TIMEOUT), "\n".join(logs)
        logs.append(scrub(f"$ {cmds.emulate}\n{proc.stdout}{proc.stderr}".rstrip(), td))
        rc = proc.returncode
        if rc == 0:
            return TestOutcome.passed(), "\n".join(logs)
        if rc < 0:
            return TestOutcome.crash(_signal_name(-rc)), "\n".join(logs)
        return TestOutcome.test_failed(rc), "\n".join(logs)


def run_build_step(template: str, mapping: dict[str, str], timeout: float):
    from .toolrun import run_command

    return run_command(template, mapping, timeout)


# --- error taxonomy ----------------------------------------------------------

@dataclass(frozen=True)
class ClassifierRules:
    version: str
    addressing_signals: frozenset[str]
    addressing_patterns: tuple[str, ...]
    regalloc_patterns: tuple[str, ...]


def load_classifier_rules() -> ClassifierRules:
    text = (
        resources.files("xisa.data").joinpath("error_patterns.cfg").read_text("utf-8")
    )
    cp = configparser.RawConfigParser()
    cp.read_string(text)
    split_lines = lambda s: tuple(  # noqa: E731
        line.strip().lower() for line in s.splitlines() if line.strip()
    )
    return ClassifierRules(
        version=cp.get("meta", "version"),
        addressing_signals=frozenset(cp.get("addressing", "signals").split()),
        addressing_patterns=split_lines(cp.get("addressing", "log_patterns")),
        regalloc_patterns=split_lines(cp.get("register_allocation", "log_patterns")),
    )


_RULES: ClassifierRules | None = None


def classifier_rules() -> ClassifierRules:
    global _RULES
    if _RULES is None:
        _RULES = load_classifier_rules()
    return _RULES


def classify_error(
    outcome: TestOutcome,
    logs: str,
    candidate: AssemblyUnit,
    rules: ClassifierRules | None = None,
) -> ErrorClass:
    """Rule cascade over a non-Pass outcome.

    1. memory-fault crash signal or addressing text in the logs -> ADDRESSING
    2. overwrite-without-read in the candidate's register profile, or an
       assembler diagnostic naming a register conflict -> REGISTER_ALLOCATION
    3. everything else (bad constants, FP exceptions, wrong results,
       timeouts) -> OTHER
    """
    if outcome.is_pass:
        raise ValueError("classify_error is defined for non-Pass outcomes only")
    rules = rules or classifier_rules()
    lowered = logs.lower()

    if outcome.status is OutcomeStatus.RUNTIME_CRASH:
        if outcome.signal_name in rules.addressing_signals:
            return ErrorClass.ADDRESSING
    if any(pat in lowered for pat in rules.addressing_patterns):
        return ErrorClass.ADDRESSING

    if any(pat in lowered for pat in rules.regalloc_patterns):
        return ErrorClass.REGISTER_ALLOCATION
    profile = static_register_profile(candidate)
    if any(p.overwrite_without_read_lines for p in profile.values()):
        return ErrorClass.REGISTER_ALLOCATION

    return ErrorClass.OTHER


# --- suite evaluation ----------------------------------------------------------

def evaluate_pair(
    pair: TranspilePair,
    backend: Backend,
    params: GenerationParams,
    cfg: ToolchainConfig,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    line_level: bool = False,
) -> EvalResult:
    try:
        response = backend.transpile(
            TranspileRequest(
                source_text=pair.x86.normalized_text,
                target_isa=pair.target_isa,
                params=params,
            )
        )
    except ToolchainError:
        raise
    except XisaError as exc:
        distance, exact = score_syntactic(
            "", pair.target.normalized_text, pair.target_isa, policy, line_level
        )
        return EvalResult(
            pair_id=pair.pair_id,
            backend_id=backend.backend_id,
            edit_distance=distance,
            exact_match=exact,
            outcome=TestOutcome.test_failed(0),
            error_class=ErrorClass.OTHER,
            candidate_index_used=0,
            logs=f"backend error: {exc}",
        )

    candidates = [c.text for c in response.candidates]
    distance, exact = score_syntactic(
        candidates[0], pair.target.normalized_text, pair.target_isa, policy, line_level
    )

    first_outcome: TestOutcome | None = None
    first_logs = ""
    chosen_index = 0
    outcome: TestOutcome | None = None
    logs = ""
    for index, text in enumerate(candidates):
        this_outcome, this_logs = run_functional(text, pair, cfg)
        if index == 0:
            first_outcome, first_logs = this_outcome, this_logs
        if this_outcome.is_pass:
            outcome, logs, chosen_index = this_outcome, this_logs, index
            break
    if outcome is None:
        assert first_outcome is not None
        outcome, logs, chosen_index = first_outcome, first_logs, 0

    error_class = None
    if not outcome.is_pass:
        unit = parse_assembly(candidates[chosen_index], pair.target_isa)
        error_class = classify_error(outcome, logs, unit)

    return EvalResult(
        pair_id=pair.pair_id,
        backend_id=backend.backend_id,
        edit_distance=distance,
        exact_match=exact,
        outcome=outcome,
        error_class=error_class,
        candidate_index_used=chosen_index,
        logs=logs,
        latency_ms=response.latency_ms,
    )


def evaluate_suite(
    pairs: Sequence[TranspilePair],
    backend: Backend,
    params: GenerationParams,
    cfg: ToolchainConfig,
    policy: NormalizationPolicy = DEFAULT_POLICY,
    jobs: int = 1,
    line_level: bool = False,
) -> tuple[list[EvalResult], SuiteSummary]:
    """Evaluate every pair; results come back sorted by pair_id."""
    if not pairs:
        raise ValueError("empty suite")
    results: list[EvalResult]
    if jobs <= 1:
        results = [
            evaluate_pair(p, backend, params, cfg, policy, line_level) for p in pairs
        ]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    lambda p: evaluate_pair(p, backend, params, cfg, policy, line_level),
                    pairs,
                )
            )
    results.sort(key=lambda r: r.pair_id)
    return results, summarize(results)


# --- cross-architecture agreement ---------------------------------------------

@dataclass(frozen=True)
class ConfusionCounts:
    both_pass: int
    both_fail: int
    a_only_fail: int
    b_only_fail: int

    @property
    def n(self) -> int:
        return self.both_pass + self.both_fail + self.a_only_fail + self.b_only_fail

    @property
    def agreement_exact(self) -> Fraction:
        if self.n == 0:
            return Fraction(0)
        return Fraction(self.both_pass + self.both_fail, self.n)

    @property
    def agreement(self) -> float:
        return float(self.agreement_exact)


def confusion_matrix(
    results_a: Sequence[EvalResult], results_b: Sequence[EvalResult]
) -> ConfusionCounts:
    a_by_id = {r.pair_id: r for r in results_a}
    b_by_id = {r.pair_id: r for r in results_b}
    if set(a_by_id) != set(b_by_id):
        only_a = sorted(set(a_by_id) - set(b_by_id))[:5]
        only_b = sorted(set(b_by_id) - set(a_by_id))[:5]
        raise MismatchedSuites(
            f"pair_id sets differ (a-only: {only_a}, b-only: {only_b})"
        )
    both_pass = both_fail = a_only = b_only = 0
    for pair_id, ra in a_by_id.items():
        rb = b_by_id[pair_id]
        if ra.outcome.is_pass and rb.outcome.is_pass:
            both_pass += 1
        elif not ra.outcome.is_pass and not rb.outcome.is_pass:
            both_fail += 1
        elif not ra.outcome.is_pass:
            a_only += 1
        else:
            b_only += 1
    return ConfusionCounts(both_pass, both_fail, a_only, b_only)


# --- record serialization -------------------------------------------------------

def result_to_record(result: EvalResult) -> dict:
    return {
        "schema": RESULT_SCHEMA,
        "pair_id": result.pair_id,
        "backend_id": result.backend_id,
        "edit_distance": result.edit_distance,
        "exact_match": result.exact_match,
        "outcome": result.outcome.status.value,
        "failed_count": result.outcome.failed_count,
        "signal_name": result.outcome.signal_name,
        "error_class": result.error_class.value if result.error_class else None,
        "candidate_index_used": result.candidate_index_used,
        "logs": result.logs,
        "latency_ms": result.latency_ms,
    }


def record_to_result(record: dict) -> EvalResult:
    return EvalResult(
        pair_id=record["pair_id"],
        backend_id=record["backend_id"],
        edit_distance=record["edit_distance"],
        exact_match=record["exact_match"],
        outcome=TestOutcome(
            OutcomeStatus(record["outcome"]),
            failed_count=record.get("failed_count", 0),
            signal_name=record.get("signal_name", ""),
        ),
        error_class=ErrorClass(record["error_class"]) if record["error_class"] else None,
        candidate_index_used=record["candidate_index_used"],
        logs=record.get("logs", ""),
        latency_ms=record.get("latency_ms", 0.0),
    )


def summary_to_record(summary: SuiteSummary) -> dict:
    return {
        "schema": SUMMARY_SCHEMA,
        "n": summary.n,
        "avg_edit_distance": summary.avg_edit_distance,
        "exact_match_rate": summary.exact_match_rate,
        "test_accuracy": summary.test_accuracy,
        "error_class_histogram": summary.error_class_histogram,
    }


def read_results(path: str | Path) -> tuple[list[EvalResult], SuiteSummary | None]:
    results: list[EvalResult] = []
    summary: SuiteSummary | None = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record.get("schema") == RESULT_SCHEMA:
                results.append(record_to_result(record))
            elif record.get("schema") == SUMMARY_SCHEMA:
                summary = SuiteSummary(
                    n=record["n"],
                    avg_edit_distance=record["avg_edit_distance"],
                    exact_match_rate=record["exact_match_rate"],
                    test_accuracy=record["test_accuracy"],
                    error_class_histogram=record["error_class_histogram"],
                )
    return results, summary
