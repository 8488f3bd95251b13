import math

import numpy as np
import pytest

import smod


def test_generators_and_loss():
    inst = smod.phase_retrieval(n=40, d=5, p_fail=0.0, seed=3)
    assert inst.n == 40 and inst.dim == 5 and inst.kind == "phase_retrieval"
    assert smod.loss(inst, inst.truth) == pytest.approx(0.0, abs=1e-12)
    assert smod.loss(inst, np.zeros(5)) > 0.0

    bd = smod.blind_deconvolution(n=30, d=4, seed=1)
    assert bd.dim == 8
    lad = smod.absolute_linear(n=30, d=4, seed=1)
    assert smod.weak_convexity(lad) == 0.0


def test_make_instance_and_prox_of_a_scalar_loss():
    # f(x) = |x^2 - 1| sampled once; prox-linear step from z = y = 2 with gamma = 1
    inst = smod.make_instance("phase_retrieval", np.array([[1.0]]), np.array([1.0]))
    out = smod.prox_step(inst, "spl", [0], np.array([2.0]), np.array([2.0]), 1.0)
    assert out["converged"]
    # |3 + 4 (x - 2)| + (x - 2)^2 / 2 is minimized on the kink x = 5/4
    assert out["x_plus"][0] == pytest.approx(1.25)
    sgd = smod.prox_step(inst, "sgd", [0], np.array([2.0]), np.array([2.0]), 2.0)
    assert sgd["x_plus"][0] == pytest.approx(2.0 - 4.0 / 2.0)
    with pytest.raises(ValueError):
        smod.make_instance("phase_retrieval", np.ones((2, 1)), np.ones(3))


def test_run_decreases_the_objective_and_is_reproducible():
    inst = smod.phase_retrieval(n=100, d=5, p_fail=0.1, seed=2)
    x0 = inst.truth + 0.3 * np.random.default_rng(0).standard_normal(5)
    first = smod.run(inst, algorithm="semod_mb", kind="spl", K=300, m=4, beta=0.5, alpha0=1.0,
                     seed=7, x0=x0)
    again = smod.run(inst, algorithm="semod_mb", kind="spl", K=300, m=4, beta=0.5, alpha0=1.0,
                     seed=7, x0=x0)
    assert first["final_objective"] < first["objective"][0]
    assert np.array_equal(first["x_final"], again["x_final"])
    assert first["k"][0] == 1 and len(first["k"]) == 301


def test_nesterov_and_stationarity_on_least_absolute_deviation():
    lad = smod.absolute_linear(n=60, d=3, p_fail=0.2, seed=5)
    rec = smod.run(lad, algorithm="nesterov", kind="spl", K=200, m=2, schedule="nesterov",
                   d_tilde=5.0, seed=1)
    assert rec["k"][0] == 0
    assert math.isfinite(rec["final_objective"])
    prox = smod.moreau_prox(lad, rec["x_final"], 1.0)
    assert prox["converged"]
    norm = smod.moreau_grad_norm(lad, rec["x_final"], 1.0)
    assert norm == pytest.approx(np.linalg.norm(rec["x_final"] - prox["x_hat"]), rel=1e-9)


def test_stability_bound_holds():
    inst = smod.phase_retrieval(n=50, d=4, seed=4)
    z = np.random.default_rng(1).standard_normal(4)
    gamma = 2.0 * smod.max_curvature(inst)
    report = smod.stability(inst, "spp", z, z, gamma, m=4, trials=50, seed=3)
    assert report["violations"] == 0 and report["invalid"] == 0
    assert all(d <= b + 1e-9 for d, b in zip(report["distance"], report["bound"]))
    gap = smod.expectation_gap(inst, "spl", z, gamma, m=4, trials=200, seed=2)
    assert abs(gap["estimate"]) <= gap["bound"] + gap["half_width"]


def test_bad_names_raise():
    inst = smod.phase_retrieval(n=10, d=2, seed=0)
    with pytest.raises(ValueError):
        smod.run(inst, algorithm="adam")
    with pytest.raises(ValueError):
        smod.run(inst, schedule="cosine")
