import dataclasses

import numpy as np
import pytest

from smjls.lmi import (
    AllInfeasible,
    Certificate,
    Feasible,
    GainBoundExceeded,
    Infeasible,
    PositivityError,
    build_brl_lmi,
    build_stability_lmi,
    certificate_from_json,
    certificate_to_json,
    certify,
    evaluate_blocks,
    gain_bisection,
    solve_feasibility,
    verify_certificate,
)
from smjls.model import ModeMatrices, SystemDef, TransitionMatrixSet
from smjls.switching import AllSequences, EventuallyPeriodic

from oracles import random_contractive_system


def scalar_system(a=0.5):
    md = ModeMatrices(np.array([[a]]), np.zeros((1, 1)), np.zeros((1, 1)),
                      np.zeros((1, 1)))
    return SystemDef((md,), TransitionMatrixSet((np.eye(1),)), AllSequences(),
                     np.array([1.0]))


def test_problem_counts_follow_window_sets(graph_system, contractive_system):
    prob = build_stability_lmi(graph_system, 1)
    assert len(prob.var_index) == 2 * 2      # modes x length-1 windows
    assert len(prob.block_index) == 2 * 3    # modes x length-2 windows
    assert prob.block_size == 3

    prob = build_brl_lmi(contractive_system, 0)
    assert len(prob.var_index) == 2 * 1
    assert len(prob.block_index) == 2 * 2
    assert prob.block_size == 5


def test_window_free_problem_indexes_by_mode_and_symbol(contractive_system):
    prob = build_stability_lmi(contractive_system, 0)
    assert set(prob.var_index) == {(1, ()), (2, ())}
    assert set(prob.block_index) == {(1, (1,)), (1, (2,)), (2, (1,)), (2, (2,))}


def test_singleton_alphabet_collapses_to_mode_indexed_family():
    system = random_contractive_system(5)
    for M in (0, 2):
        prob = build_stability_lmi(system, M)
        assert len(prob.var_index) == system.N
        assert len(prob.block_index) == system.N


def test_scalar_stability_feasible():
    out = solve_feasibility(build_stability_lmi(scalar_system(0.5), 0))
    assert isinstance(out, Feasible)
    cert = out.certificate
    assert cert.eta >= 1.0 - 1e-9
    assert 0 < cert.lam < 1


def test_nilpotent_dynamics_feasible_at_window_zero(contractive_system):
    modes = tuple(
        ModeMatrices(np.zeros((3, 3)), md.B, md.C, md.D)
        for md in contractive_system.modes
    )
    system = SystemDef(modes, contractive_system.transitions, AllSequences(),
                       contractive_system.p0)
    result = certify(system, "stability", 0)
    assert isinstance(result, tuple) and result[0] == 0


def test_reference_brl_window_search(contractive_system, brl_certificate):
    out0 = solve_feasibility(build_brl_lmi(contractive_system, 0))
    assert isinstance(out0, Infeasible)
    assert out0.best_margin is not None and out0.best_margin < 0
    assert brl_certificate.M == 1
    assert brl_certificate.nu > 1e-7


def test_graph_stability_window_search(graph_system, stability_certificate):
    out0 = solve_feasibility(build_stability_lmi(graph_system, 0))
    assert isinstance(out0, Infeasible)
    assert stability_certificate.M == 1


def test_constant_singleton_searches(graph_system):
    stable = SystemDef(graph_system.modes, graph_system.transitions,
                       EventuallyPeriodic((), (1,)), graph_system.p0)
    result = certify(stable, "stability", 0)
    assert isinstance(result, tuple) and result[0] == 0

    unstable = SystemDef(graph_system.modes, graph_system.transitions,
                         EventuallyPeriodic((), (2,)), graph_system.p0)
    result = certify(unstable, "stability", 3)
    assert isinstance(result, AllInfeasible)
    assert result.conclusive
    assert len(result.records) == 4
    margins = [r.best_margin for r in result.records]
    assert all(m is not None and m < 0 for m in margins)
    # re-indexing a homogeneous problem does not change the achievable margin
    assert max(margins) - min(margins) < 1e-6


def test_homogeneous_reindexing_preserves_certificates():
    system = random_contractive_system(11)
    result = certify(system, "stability", 0)
    assert isinstance(result, tuple)
    _, cert = result
    for M in (1, 3):
        word = (1,) * M
        lifted = Certificate(
            kind=cert.kind, M=M, margin=cert.margin,
            X={(i, word): cert.X[(i, ())] for i in range(1, system.N + 1)},
            eta=cert.eta, rho=cert.rho, nu=cert.nu,
        )
        report = verify_certificate(system, lifted)
        assert report.ok
        assert report.nu == pytest.approx(cert.nu, rel=1e-12)


def test_verification_catches_corruption(contractive_system, brl_certificate):
    good = verify_certificate(contractive_system, brl_certificate)
    assert good.ok
    assert good.max_block_eig <= -brl_certificate.margin / 2

    broken_x = dict(brl_certificate.X)
    key = sorted(broken_x)[0]
    broken_x[key] = np.zeros((3, 3))
    broken = dataclasses.replace(brl_certificate, X=broken_x)
    report = verify_certificate(contractive_system, broken)
    assert not report.ok
    assert report.worst_block[0] in (1, 2)

    missing = dict(brl_certificate.X)
    missing.pop(key)
    with pytest.raises(ValueError, match="index mismatch"):
        verify_certificate(
            contractive_system, dataclasses.replace(brl_certificate, X=missing)
        )


def test_stability_certificates_scale(graph_system, stability_certificate):
    alpha = 3.0
    scaled = dataclasses.replace(
        stability_certificate,
        X={k: alpha * v for k, v in stability_certificate.X.items()},
        eta=alpha * stability_certificate.eta,
        rho=alpha * stability_certificate.rho,
        nu=alpha * stability_certificate.nu,
    )
    report = verify_certificate(graph_system, scaled)
    assert report.ok
    assert report.nu == pytest.approx(alpha * stability_certificate.nu, rel=1e-9)
    assert report.eta == pytest.approx(alpha * stability_certificate.eta, rel=1e-9)


def test_brl_leading_block_is_stability_block_plus_output_gram(
    contractive_system, brl_certificate
):
    X = brl_certificate.X
    stab = dict(evaluate_blocks(contractive_system, "stability", 1, X))
    brl = dict(evaluate_blocks(contractive_system, "brl", 1, X, gamma=1.0))
    for key, block in brl.items():
        i = key[0]
        md = contractive_system.mode(i)
        lead = block[:3, :3] - md.C.T @ md.C
        assert np.allclose(lead, stab[key], atol=1e-12)
        # block negativity of the full family implies the stability family
        assert np.linalg.eigvalsh(stab[key])[-1] < 0


def test_positivity_refusal():
    md = ModeMatrices(0.3 * np.eye(2), np.zeros((2, 1)), 0.1 * np.eye(2),
                      np.zeros((2, 1)))
    degenerate = TransitionMatrixSet((np.array([[1.0, 0.0], [1.0, 0.0]]),))
    system = SystemDef((md, md), degenerate, AllSequences(), np.array([0.5, 0.5]))
    with pytest.raises(PositivityError):
        build_brl_lmi(system, 0)
    assert isinstance(certify(system, "stability", 0), tuple)  # stability unaffected


def test_large_gamma_recovers_stability(contractive_system):
    assert isinstance(
        solve_feasibility(build_stability_lmi(contractive_system, 0)), Feasible
    )
    assert isinstance(
        solve_feasibility(build_brl_lmi(contractive_system, 0, gamma=1e6)), Feasible
    )


def test_static_gain_matches_largest_singular_value():
    D = np.array([[0.7, 0.1], [0.0, 0.4]])
    md = ModeMatrices(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), D)
    system = SystemDef((md,), TransitionMatrixSet((np.eye(1),)), AllSequences(),
                       np.array([1.0]))
    result = gain_bisection(system, 0, tol=1e-3)
    sigma = float(np.linalg.svd(D, compute_uv=False)[0])
    assert sigma * (1 - 1e-9) <= result.gamma <= sigma * (1 + 2e-3)
    assert verify_certificate(system, result.certificate).ok


def test_longer_window_never_hurts_the_gain(contractive_system):
    coarse = 0.05
    hi_m = gain_bisection(contractive_system, 1, tol=coarse)
    lo_m = gain_bisection(contractive_system, 0, tol=coarse, gamma_max=1e3)
    assert hi_m.gamma <= lo_m.gamma * (1 + coarse)
    assert hi_m.gamma < 1.0 < lo_m.gamma


def test_gain_exhaustion_raises():
    md = ModeMatrices(np.array([[1.5]]), np.zeros((1, 1)), np.zeros((1, 1)),
                      np.zeros((1, 1)))
    system = SystemDef((md,), TransitionMatrixSet((np.eye(1),)), AllSequences(),
                       np.array([1.0]))
    with pytest.raises(GainBoundExceeded, match="gamma_max"):
        gain_bisection(system, 0, gamma_max=10.0)


def test_certificate_json_round_trip(contractive_system, brl_certificate):
    text = certificate_to_json(brl_certificate)
    loaded = certificate_from_json(text)
    assert loaded.kind == brl_certificate.kind
    assert loaded.M == brl_certificate.M
    for key, val in brl_certificate.X.items():
        assert np.array_equal(loaded.X[key], val)
    assert certificate_to_json(loaded) == text
    before = verify_certificate(contractive_system, brl_certificate)
    after = verify_certificate(contractive_system, loaded)
    assert before.max_block_eig == after.max_block_eig
