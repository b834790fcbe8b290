from __future__ import annotations

import stat
import sys
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xisa.bench import (
    BenchSummary,
    bench_run,
    compare_modes,
    geomean,
    record_to_summary,
    summary_to_record,
)
from xisa.errors import AllRunsFailed


def test_geomean_closed_forms():
    assert geomean([1.0, 1.0, 1.0]) == pytest.approx(1.0)
    assert geomean([2.0, 8.0]) == pytest.approx(4.0)
    assert geomean([3.0, 9.0, 27.0]) == pytest.approx(9.0)  # cube root of 729


def test_geomean_rejects_empty_and_nonpositive():
    with pytest.raises(ValueError):
        geomean([])
    with pytest.raises(ValueError):
        geomean([1.0, 0.0])
    with pytest.raises(ValueError):
        geomean([-1.0])


@settings(max_examples=300, deadline=None)
@given(
    xs=st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=20),
    k=st.floats(min_value=1e-3, max_value=1e3),
)
def test_geomean_scales_linearly(xs, k):
    assert geomean([k * x for x in xs]) == pytest.approx(k * geomean(xs), rel=1e-9)


@settings(max_examples=300, deadline=None)
@given(xs=st.lists(st.floats(min_value=1e-6, max_value=1e6), min_size=1, max_size=20))
def test_geomean_permutation_invariant(xs):
    assert geomean(list(reversed(xs))) == pytest.approx(geomean(xs), rel=1e-12)


def _script(tmp_path: Path, name: str, body: str) -> str:
    path = tmp_path / name
    path.write_text(f"#!{sys.executable}\n{body}")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


def test_bench_run_sleep_fixture(tmp_path):
    binary = _script(tmp_path, "sleeper", "import time; time.sleep(0.01)")
    summary = bench_run(binary, runs=5, warmup=1, mode="sleepy", timeout=10)
    assert summary.n_valid == 5
    assert summary.n_failed == 0
    # wide tolerance: interpreter startup dominates the 10ms sleep
    assert 0.010 <= summary.geomean_time <= 2.0
    assert summary.geomean_rss > 0


def test_bench_run_single_run_equals_sample(tmp_path):
    binary = _script(tmp_path, "quick", "pass")
    summary = bench_run(binary, runs=1, warmup=0, mode="single", timeout=10)
    assert summary.n_valid == 1
    valid = [s for s in summary.samples if s.exit_code == 0]
    assert summary.geomean_time == pytest.approx(valid[0].wall_time)
    assert summary.geomean_rss == pytest.approx(float(valid[0].max_rss))


def test_bench_run_all_failures(tmp_path):
    binary = _script(tmp_path, "failing", "raise SystemExit(3)")
    with pytest.raises(AllRunsFailed):
        bench_run(binary, runs=3, warmup=0, timeout=10)


def test_bench_run_missing_binary(tmp_path):
    with pytest.raises(FileNotFoundError):
        bench_run(str(tmp_path / "nope"), runs=1)


def test_bench_run_rejects_zero_runs(tmp_path):
    binary = _script(tmp_path, "quick", "pass")
    with pytest.raises(ValueError):
        bench_run(binary, runs=0)


def _summary(mode: str, time_s: float, rss: float) -> BenchSummary:
    return BenchSummary(
        mode=mode, n_valid=100, n_failed=0, geomean_time=time_s, geomean_rss=rss
    )


def test_compare_modes_speedup_arithmetic():
    # translated binary at 1.00s vs dynamic-translation baseline at 1.73s
    rows = compare_modes(
        [_summary("baseline", 1.73, 2.0), _summary("translated", 1.00, 2.0)],
        baseline_mode="baseline",
    )
    by_mode = {r.mode: r for r in rows}
    assert by_mode["baseline"].speedup == pytest.approx(1.0)
    assert by_mode["translated"].speedup == pytest.approx(1.73)


def test_compare_modes_self_is_unity():
    rows = compare_modes([_summary("only", 0.5, 1000.0)], baseline_mode="only")
    assert rows[0].speedup == pytest.approx(1.0)
    assert rows[0].memory_ratio == pytest.approx(1.0)


def test_compare_modes_memory_ratio_arithmetic():
    # 2.49 MB baseline versus 1.034 MB: ~2.41x better memory efficiency
    rows = compare_modes(
        [_summary("baseline", 1.0, 2.49), _summary("native_like", 1.0, 1.034)],
        baseline_mode="baseline",
    )
    ratio = {r.mode: r for r in rows}["native_like"].memory_ratio
    assert round(ratio, 2) == 2.41


def test_compare_modes_missing_baseline():
    with pytest.raises(ValueError, match="not present"):
        compare_modes([_summary("a", 1.0, 1.0)], baseline_mode="b")


def test_summary_record_roundtrip(tmp_path):
    binary = _script(tmp_path, "quick", "pass")
    summary = bench_run(binary, runs=2, warmup=0, timeout=10)
    assert record_to_summary(summary_to_record(summary)) == summary
