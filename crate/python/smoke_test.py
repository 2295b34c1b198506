"""Smoke test for the pychaintraj extension module.

Build first, then run from the repository root:

    cargo build --release -p chaintraj-py
    cp target/release/libpychaintraj.so python/pychaintraj.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pychaintraj as ct


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    p = ct.Problem([-2.0, 0.5, 1.0], [2.0, 0.0, 0.0], -1.0, 1.0)
    assert p.order == 3 and p.warnings == []

    plan = ct.plan(p)
    expected = (400.0 / 3.0) ** (1.0 / 3.0) - 1.0
    assert close(plan.duration, expected, 1e-9), plan.duration
    assert plan.profile == "000"
    assert len(plan.times) == 7 and plan.times[-1] == plan.duration

    x, u = plan.evaluate(0.0)
    assert x == [-2.0, 0.5, 1.0] and u in (-1.0, 1.0)
    x, _ = plan.evaluate(plan.duration)
    assert all(close(a, b, 1e-9) for a, b in zip(x, [2.0, 0.0, 0.0])), x

    rows = plan.sample_csv(count=11).strip().splitlines()
    assert rows[0] == "t,x1,x2,x3,u" and len(rows) > 12
    ts = [float(r.split(",")[0]) for r in rows[1:]]
    assert ts == sorted(ts) and ts[-1] == plan.duration
    assert all(any(close(t, g, 1e-12) for g in ts) for t in plan.times)

    doc = json.loads(plan.to_json())
    assert doc["profile"] == "000" and doc["guard"] == 0

    ok, failures = plan.check()
    assert ok, failures

    # trapezoid: accelerate, cruise at the velocity bound, brake
    trap = ct.plan(ct.Problem([0.0, 0.0], [4.0, 0.0], -1.0, 1.0, [-1.0], [1.0]))
    assert close(trap.duration, 5.0, 1e-12) and trap.profile == "1"

    sigma, bmap = ct.switching_sequence(3)
    assert sigma == [1, 0, -1, 0, -1, 0, 1]
    assert bmap == [4, 3, -4, 2, -4, -3, 4]
    assert "8 profile types" in ct.bundle_summary(3)

    infeasible = ct.Problem([0.0, 1.0, 1.0], [3.0, 0.0, 0.0], -1.0, 1.0, [-1.0, -1.0], [1.0, 1.0])
    assert any("boundary_infeasible" in w for w in infeasible.warnings)
    assert ct.plan(infeasible).check()[0]

    for bad in (
        lambda: ct.Problem([0.0, 0.0], [1.0, 0.0], 1.0, 2.0),
        lambda: ct.Problem([0.0, 0.0], [1.0], -1.0, 1.0),
        lambda: ct.switching_sequence(3, 0),
    ):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")

    assert math.isfinite(plan.duration)
    print("pychaintraj smoke test passed")


if __name__ == "__main__":
    main()
