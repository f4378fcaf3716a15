import time

from agsim.bench import BenchResult, run_sweep


def _sleeper(seconds):
    return lambda: time.sleep(seconds)


def test_steps_tracking_prediction_pass():
    pts = [(k, _sleeper(0.006 * 2**k), 2.0**k) for k in range(3)]
    res = run_sweep("synthetic", pts, repeats=1)
    assert res.passed
    assert abs(res.exponent - 1) < 0.3


def test_mismatched_growth_fails():
    pts = [(k, _sleeper(0.006 * 2**k), 20.0**k) for k in range(3)]
    assert not run_sweep("synthetic", pts, repeats=1).passed


def test_overhead_rows_are_not_checked():
    pts = [(k, (lambda: None), 10.0**k) for k in range(3)]
    res = run_sweep("tiny", pts, repeats=1)
    assert not any(r.checked for r in res.rows)
    assert not res.passed and res.exponent is None


def test_csv_columns():
    res = BenchResult("x", [], None)
    assert res.csv().strip() == "suite,size,seconds,predicted,step_ratio,predicted_ratio,checked,ok"
