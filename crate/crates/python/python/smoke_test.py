"""Smoke test for the splitfeas extension module.

Build and place the module next to this script first:

    cargo build --release -p splitfeas-py --features extension-module
    cp target/release/libsplitfeas_py.so crates/python/python/splitfeas.so
    python3 crates/python/python/smoke_test.py
"""

import math

import numpy as np

import splitfeas as sf


def check_linear_map():
    a = sf.LinearMap([[2.0, 0.0, 0.0], [0.0, 0.5, 0.0]])
    assert (a.rows, a.cols, a.rank) == (2, 3, 2)
    assert math.isclose(a.op_norm, 2.0, rel_tol=1e-14)
    assert math.isclose(a.min_pos_sv, 0.5, rel_tol=1e-14)
    s = a.spectra()
    assert s["max_rel_deviation"] < 1e-12, s
    x = [1.0, -2.0, 3.0]
    assert np.allclose(a.apply(x), [2.0, -1.0])
    assert np.allclose(a.apply_adjoint([1.0, 1.0]), [2.0, 0.5, 0.0])


def check_landweber_step():
    rng = np.random.default_rng(0)
    m, n = 3, 5
    mat = rng.standard_normal((m, n))
    a = sf.LinearMap(mat.tolist())
    q = sf.ConvexSet.ball([0.0] * m, 0.5)
    t = sf.Operator.projection(q)
    x = rng.standard_normal(n)

    ax = mat @ x
    r = np.array(q.project(ax.tolist())) - ax
    norm_a = np.linalg.norm(mat, 2)
    expected = x + mat.T @ r / norm_a**2
    got = np.array(sf.landweber_apply(a, t, x.tolist()))
    assert np.allclose(got, expected, atol=1e-12), (got, expected)

    tau = sf.tau(a, t, x.tolist())
    assert tau >= 1.0 - 1e-12
    point, sigma = sf.extrapolated_step(a, t, x.tolist(), "tau", 1.0)
    assert math.isclose(sigma, tau, rel_tol=1e-12)
    assert np.allclose(point, x + tau * mat.T @ r / norm_a**2, atol=1e-10)

    relaxed = t.relaxed(1.5)
    assert math.isclose(relaxed.rho, 1.0 / 3.0, rel_tol=1e-12)
    assert t.is_cutter and not relaxed.is_cutter


def check_solver():
    g = sf.generate_instance("halfspace", 6, 4, 1)
    assert (g.n, g.m) == (6, 4)
    assert g.solution_distance(g.witness) < 1e-12
    tr = g.solve(variant="classic_cq", lam=1.5)
    assert tr.converged, tr.iterations
    assert tr.final_dist < 1e-8
    report = g.certify()
    q, provenance = report["q"]
    assert 0.0 < q < 1.0 and provenance, report
    assert tr.observed_rate() <= q

    alt = g.solve(variant="cutter_relaxed", sigma="tau", lam=(0.5, 1.5))
    assert alt.converged
    assert len(alt.step_norms) == alt.iterations

    gamma, q2 = sf.rate_bound(1.0, 1.0, 1.0, 0.25, 0.5, 1.0)
    assert math.isclose(gamma, (0.125 / 2.0) ** 2, rel_tol=1e-14)
    assert math.isclose(q2, math.sqrt(1.0 - gamma**2 / 2.0), rel_tol=1e-14)


def check_errors():
    try:
        sf.generate_instance("no-such-recipe", 3, 3, 0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown recipe accepted")
    try:
        sf.generate_instance("halfspace", 4, 3, 0).solve(lam=1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("lambda above 1 accepted for landweber_sqne")


if __name__ == "__main__":
    check_linear_map()
    check_landweber_step()
    check_solver()
    check_errors()
    print("smoke test passed")
