"""Smoke test for the Python bindings.

Build and install first:

    pip install --no-build-isolation -e crates/py
"""

import math
import sys
import tempfile
from pathlib import Path

import lineplan_py as lp

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    inst = lp.Instance.load(str(ROOT / "fixtures" / "t1.inst"))
    print(inst)
    assert inst.num_periods == 2
    assert inst.max_adjustments() == 8

    model = inst.build_model(2)
    sol = model.solve(time_limit=60.0)
    print(f"solve: status={sol.status} gjt={sol.gjt:.3f} adj={sol.freq_adjustments}+{sol.stop_adjustments}")
    assert sol.status == "optimal"
    assert sol.freq_adjustments + sol.stop_adjustments <= 2

    best = lp.brute_force(inst, 2)
    assert best is not None
    _, oracle = best
    assert math.isclose(sol.gjt, oracle, rel_tol=1e-6), (sol.gjt, oracle)

    gjt, load = sol.plan.assign()
    assert math.isclose(gjt, sol.gjt, rel_tol=1e-6)
    assert load <= 1.0 + 1e-9

    with tempfile.TemporaryDirectory() as tmp:
        model.export_mps(str(Path(tmp) / "model.mps"))
        assert (Path(tmp) / "model.mps.names").exists()
        plan_path = Path(tmp) / "plan.toml"
        sol.plan.save(str(plan_path))
        again = lp.LinePlan.load(inst, str(plan_path))
        assert again.frequency == sol.plan.frequency

    points, csv = lp.run_frontier(inst, epsilons=[0, 2, 4], threads=1)
    assert [p.epsilon for p in points] == [0, 2, 4]
    assert csv.splitlines()[0] == "epsilon,total_adj,freq_adj,stop_adj,gjt_min,gap,status"
    gjts = [p.gjt for p in points]
    assert all(b <= a + 1e-6 * a for a, b in zip(gjts, gjts[1:])), gjts

    assert math.isclose(lp.revenue_impact(-4.26, -0.81), 3.4506, abs_tol=1e-4)

    try:
        lp.Instance.from_toml("")
    except ValueError as e:
        print(f"empty instance rejected: {e}")
    else:
        raise AssertionError("empty instance accepted")

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
