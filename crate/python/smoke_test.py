#!/usr/bin/env python3
"""Smoke test for the sonic_patch_py extension module.

Build and run:

    cargo build --release -p sonic-patch-py
    cp target/release/libsonic_patch_py.so python/sonic_patch_py.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

try:
    import sonic_patch_py as sp
except ImportError as exc:
    print(f"FAILED to import sonic_patch_py: {exc}")
    print("Build it first (see the docstring at the top of this file).")
    sys.exit(1)


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def main():
    # closed-form coefficients
    assert close(sp.lambda_inv_polar(2.0, -1.0), 2.0 * math.sqrt(3.0))
    assert close(sp.lambda_inv_rt(2.0, 1.0), sp.lambda_inv_polar(2.0, -1.0))
    assert close(sp.q_polar(2.0, -1.0), -2.0 / 3.0)
    assert close(sp.q_rt(2.0, 1.0), sp.q_polar(2.0, -1.0))
    assert close(sp.t2_q_rt(2.0, 1e-8), -0.25, tol=1e-10)

    lp, lm = sp.lambda_pm(2.0, 1.0, -1.0, -1.0)
    assert close(lp, 2.8116548391159554, tol=1e-12)
    assert close(lm, 1.5519815245204083, tol=1e-12)

    c = sp.coefficients(2.0, 0.1, -1.0, -1.05)
    assert close(c["e"], -8.233695005952830, tol=1e-12)
    assert close(c["h"], 1.0415900272881768, tol=1e-12)

    l1, l2 = sp.l1_l2(2.0, 0.1, -1.0, -1.05, 1.0, 1.0, 1.5)
    assert close(l1, 1.0532222549143835, tol=1e-12)
    assert close(l2, -0.24560306459090560, tol=1e-12)

    # guards surface as ValueError
    try:
        sp.q_polar(1.0, -1.0)
    except ValueError as exc:
        assert "sonic" in str(exc)
    else:
        raise AssertionError("q_polar must refuse the sonic point")

    # wave geometry for the reference states
    assert sp.point_a(-2.0, -1.0) == (0.0, 2.0)
    bx, by = sp.point_b(-2.0, -1.0)
    assert close(bx, 1.0) and close(by, 1.0)
    assert close(sp.theta_b(-2.0, -1.0), math.pi / 4.0)

    p, m, n = sp.wave_state(0.5, 1.5, -2.0, -1.0)
    assert p == -1.5 and m == 0.0 and close(n, math.log(2.0 / 3.0))

    p, dp_plus, dp_minus = sp.wave_rs(math.pi / 4.0, -2.0, -1.0)
    assert close(p, -1.0) and close(dp_plus, -2.0) and dp_minus == 0.0

    pts = sp.trace_ab(-2.0, -1.0, 1e-3)
    end = pts[-1]
    assert math.hypot(end[0] - 1.0, end[1] - 1.0) < 1e-6
    for (xi, eta) in pts[:-1]:
        assert abs(math.hypot(xi, eta - 1.0) - 1.0) < 1e-8

    # a small end-to-end run
    run = sp.PatchRun("n_plus = 16\nn_minus = 16\n")
    assert run.node_count() > 100
    assert run.level_count() > 40
    exponent = run.rate_exponent()
    assert exponent is not None and 0.9 <= exponent <= 1.1, exponent
    assert run.sup_v_over_t() is not None
    assert run.sonic_mismatch() < 5e-3 * 2.0
    p = run.probe_p(0.95, 1.45)
    assert p is not None and -1.5 < p < -1.0

    diag = json.loads(run.diagnostics_json())
    assert diag["signs"]["all_nonpositive"] is True
    assert len(diag["level_curves"]["cauchy_sup"]) >= 4
    print("repr:", repr(run))
    print(f"rate exponent: {exponent:.4f}")
    print(f"sonic mismatch: {run.sonic_mismatch():.3e}")
    print("smoke test OK")


if __name__ == "__main__":
    main()
