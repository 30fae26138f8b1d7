import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from polarion.driven import (
    DEFAULT_PEAK_POPULATION,
    IterativeSolver,
    SteadyState,
    TwoModeModel,
    amplitude_scale,
    build_liouvillian,
    coherent_amplitudes,
    correlations,
    default_deltas,
    default_pump,
    detuning_sweep,
    g2,
    localized_basis,
    real_basis,
    solve_model,
    steady_state,
    sweep_point,
)
from polarion.errors import ConfigError, DimensionTooLarge, NonConvergence, VacuousPopulation

DIMER = dict(omega_lr=0.0, j_coupling=0.047, gamma=0.0095, u11=0.171, u22=0.171, u12=0.11 * 0.171)


def dimer_model(delta=0.0, n_max=8, pump=None):
    m = TwoModeModel(pump_amp=0.0, delta=delta, n_max=n_max, **DIMER)
    return replace(m, pump_amp=default_pump(m) if pump is None else pump)


# ---------------------------------------------------------------------------
# test-local reference implementation: column-stacked vec, left-mode-minor basis


def reference_generator(m, minor="left"):
    """Dense generator built independently of the package.

    ``minor`` selects which mode runs fastest in the basis index, so the
    "left" choice is a permutation of the package ordering.  Vectorization
    is column-stacking: vec(A X B) = (B^T kron A) vec(X).
    """
    d = m.n_max + 1
    a = np.diag(np.sqrt(np.arange(1.0, d)), 1)
    one = np.eye(d)
    al, ar = (np.kron(one, a), np.kron(a, one)) if minor == "left" else (np.kron(a, one), np.kron(one, a))
    n = al.shape[0]
    h = np.zeros((n, n), dtype=complex)
    for op, u in ((al, m.u11), (ar, m.u22)):
        num = op.T @ op
        h += m.delta * num + 0.5 * u * (num @ num - num) + m.pump_amp * (op + op.T)
    h += m.j_coupling * (al.T @ ar + ar.T @ al) + m.u12 * (al.T @ al) @ (ar.T @ ar)
    e = np.eye(n)
    gen = -1j * (np.kron(e, h) - np.kron(h.T, e))
    for op in (al, ar):
        nn = op.T @ op
        gen += m.gamma * (np.kron(op.conj(), op) - 0.5 * np.kron(e, nn) - 0.5 * np.kron(nn.T, e))
    return gen, al, ar


def reference_g2(m, minor="left"):
    gen, al, ar = reference_generator(m, minor)
    d, n = m.n_max + 1, al.shape[0]
    # rho_ij ~ s^(quanta of i + quanta of j) at weak drive; solving for
    # rho / s^q keeps the small far-from-vacuum coherences above roundoff
    s = min(1.0, 2.0 * m.pump_amp / m.gamma)
    quanta = np.arange(n) // d + np.arange(n) % d
    w = s ** np.add.outer(quanta, quanta).ravel(order="F")
    k = gen * w
    k[0] = np.eye(n).ravel(order="F") * w
    rhs = np.zeros(n * n, dtype=complex)
    rhs[0] = 1.0
    rho = (w * np.linalg.solve(k, rhs)).reshape(n, n, order="F")
    ex = lambda op: np.trace(op @ rho).real
    nl, nr = ex(al.T @ al), ex(ar.T @ ar)
    return ex(al.T @ al.T @ al @ al) / nl ** 2, ex(ar.T @ ar.T @ ar @ ar) / nr ** 2, ex(al.T @ ar.T @ ar @ al) / (nl * nr), nl


# ---------------------------------------------------------------------------


def test_localized_basis():
    w = 1500.0 - 0.004j
    assert localized_basis(w, w) == pytest.approx((1500.0, 0.0, 0.008))
    lr, j, g = localized_basis(1500.071 - 0.003j, 1499.929 - 0.006j)
    assert j == pytest.approx(0.071) and g == pytest.approx(0.009) and lr == pytest.approx(1500.0)


def test_model_invariants():
    with pytest.raises(ConfigError):
        TwoModeModel(0, 0, 0.0, 0, 0, 0, 0.1)
    with pytest.raises(ConfigError):
        TwoModeModel(0, 0, 0.1, 0, 0, 0, 0.1, n_max=2)
    with pytest.raises(ConfigError):
        TwoModeModel(0, 0, 0.1, 0.1, 0.2, 0, 0.1)
    TwoModeModel(0, 0, 0.1, 0.1, 0.2, 0, 0.1, mirror_symmetric=False)
    with pytest.raises(DimensionTooLarge):
        TwoModeModel(0, 0, 0.1, 0, 0, 0, 0.1, n_max=100)
    assert TwoModeModel.from_drive_frequency(1499.9, omega_lr=1500.0, j_coupling=0, gamma=0.1, u11=0, u22=0, u12=0, pump_amp=0).delta == pytest.approx(0.1)


def test_generator_against_reference():
    m = dimer_model(delta=0.03, n_max=3, pump=0.004)
    ref, _, _ = reference_generator(m, minor="right")
    # package: row-major vec; reference: column-major. vec_row(X) = vec_col(X^T)
    n = m.dim
    perm = np.arange(n * n).reshape(n, n).T.ravel()
    pkg = build_liouvillian(m).toarray()
    assert np.abs(pkg - ref[np.ix_(perm, perm)]).max() < 1e-14


def test_undriven_vacuum():
    m = dimer_model(pump=0.0, n_max=4)
    st_ = solve_model(m)
    vac = np.zeros_like(st_.rho)
    vac[0, 0] = 1
    assert np.abs(st_.rho - vac).max() < 1e-12
    with pytest.raises(VacuousPopulation):
        g2(st_, 0, 0)


@pytest.mark.parametrize("delta", [-0.02, 0.0, 0.013])
def test_linear_driven_cavity(delta):
    g, om = 0.01, 0.002
    m = TwoModeModel(0.0, 0.0, g, 0.0, 0.0, 0.0, om, delta=delta, n_max=8)
    st_ = solve_model(m)
    expected = om ** 2 / (delta ** 2 + g ** 2 / 4)
    assert st_.n_l == pytest.approx(expected, rel=1e-9) and st_.n_r == pytest.approx(expected, rel=1e-9)
    purity = np.trace(st_.rho @ st_.rho).real
    assert purity > 1 - 1e-8
    assert np.allclose(np.abs(coherent_amplitudes(m)) ** 2, expected)


@settings(max_examples=12, deadline=None)
@given(
    st.floats(-0.2, 0.2), st.floats(0.0, 0.05), st.floats(0.01, 0.1), st.floats(0.01, 0.1),
)
def test_linear_limit_factorizes(delta, j, gamma, pump_ratio):
    # pump <= gamma / 10 keeps |alpha|^2 <= 0.04, so the n_max = 6 cutoff is below 1e-9
    pump = pump_ratio * gamma
    m = TwoModeModel(0.0, j, gamma, 0.0, 0.0, 0.0, pump, delta=delta, n_max=6)
    st_ = solve_model(m)
    if min(st_.n_l, st_.n_r) < 1e-6:
        return
    c = correlations(st_)
    for v in (c.g11, c.g22, c.g12):
        assert abs(v - 1) < 1e-6
    alpha = coherent_amplitudes(m)
    assert st_.n_l == pytest.approx(abs(alpha[0]) ** 2, rel=1e-8)


def test_thermal_state_g2():
    nbar, n_max = 0.05, 12
    p = (nbar / (1 + nbar)) ** np.arange(n_max + 1) / (1 + nbar)
    rho = np.diag(np.kron(p, p)).astype(complex)
    state = SteadyState(rho=rho, residual=0.0, n_l=nbar, n_r=nbar, n_max=n_max)
    assert g2(state, 0, 0) == pytest.approx(2.0, rel=1e-9)
    assert g2(state, 0, 1) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("delta", [-0.06, 0.0, 0.09, 0.3])
def test_dimer_point_against_permuted_ordering(delta):
    m = dimer_model(delta=delta, n_max=5)
    c = correlations(solve_model(m))
    g11, g22, g12, _ = reference_g2(m, minor="left")
    assert c.g11 == pytest.approx(g11, rel=1e-6)
    assert c.g22 == pytest.approx(g22, rel=1e-6)
    assert c.g12 == pytest.approx(g12, rel=1e-6)


@pytest.mark.parametrize("pump,tol", [(1e-3, 2e-3), (1e-4, 3e-5)])
@pytest.mark.parametrize("delta", [-0.1, 0.0, 0.2, 0.5])
def test_weak_drive_kerr_closed_form(delta, pump, tol):
    # uncoupled sites: amplitude equations to second order give the ratio of two-photon to one-photon detunings
    g, u = 0.1, 0.3
    m = TwoModeModel(0.0, 0.0, g, u, u, 0.0, pump, delta=delta, n_max=6)
    c = correlations(solve_model(m))
    expected = (delta ** 2 + g ** 2 / 4) / ((delta + u / 2) ** 2 + g ** 2 / 4)
    assert c.g11 == pytest.approx(expected, rel=tol)


def test_reduced_coordinates_match_full_solve():
    m = dimer_model(delta=-0.03, n_max=5, pump=0.004)
    lmat = build_liouvillian(m)
    full = sla.null_space(lmat.toarray(), rcond=1e-12)[:, 0]
    full = (full / np.trace(full.reshape(m.dim, m.dim))).reshape(m.dim, m.dim)
    for swap in (False, True):
        for scale in (1.0, amplitude_scale(m)):
            rho = steady_state(lmat, m.n_max, method="direct", scale=scale, swap_symmetric=swap).rho
            assert np.abs(rho - full).max() < 1e-12


def test_real_basis_round_trip():
    rng = np.random.default_rng(0)
    n_max = 3
    d = (n_max + 1) ** 2
    basis = real_basis(n_max, True)
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    x = x + x.conj().T
    idx = np.arange(d)
    perm = (idx % (n_max + 1)) * (n_max + 1) + idx // (n_max + 1)
    x = x + x[np.ix_(perm, perm)]
    v = x.ravel()
    coords = np.where(basis.imag, v[basis.read].imag, v[basis.read].real)
    assert np.allclose(basis.expand @ coords, v, atol=1e-13)
    assert basis.trace @ coords == pytest.approx(np.trace(x).real)
    assert real_basis(n_max, False).size == d * d


def test_wrong_symmetry_claim_is_caught():
    m = TwoModeModel(0.0, 0.03, 0.01, 0.1, 0.3, 0.0, 0.003, n_max=4, mirror_symmetric=False)
    lmat = build_liouvillian(m)
    with pytest.raises(NonConvergence):
        steady_state(lmat, m.n_max, method="direct", swap_symmetric=True)
    good = solve_model(m)
    assert good.residual < 1e-10 and abs(good.n_l - good.n_r) > 1e-6


@pytest.mark.parametrize("delta", [-0.3, -0.047, 0.0, 0.04])
def test_drive_scaling(delta):
    m = dimer_model(delta=delta)
    a = solve_model(m)
    b = solve_model(replace(m, pump_amp=m.pump_amp / 2))
    assert b.n_l / a.n_l == pytest.approx(0.25, rel=0.05)
    ca, cb = correlations(a), correlations(b)
    for x, y in ((ca.g11, cb.g11), (ca.g12, cb.g12)):
        assert abs(x - y) < 0.05 * abs(x)


@settings(max_examples=8, deadline=None)
@given(st.floats(-0.3, 0.3))
def test_mirror_symmetry(delta):
    st_ = solve_model(dimer_model(delta=delta, n_max=6))
    c = correlations(st_)
    assert abs(c.g11 - c.g22) < 1e-8
    assert abs(st_.n_l - st_.n_r) < 1e-10


@pytest.mark.parametrize("delta", [-0.3, -0.05, 0.0, 0.06, 0.3])
def test_truncation_convergence(delta):
    a = correlations(solve_model(dimer_model(delta=delta, n_max=8)))
    b = correlations(solve_model(dimer_model(delta=delta, n_max=10)))
    assert abs(a.g11 - b.g11) < 1e-4 and abs(a.g12 - b.g12) < 1e-4


def test_physicality_checks():
    st_ = solve_model(dimer_model(delta=0.02))
    assert st_.physical
    assert st_.residual < 1e-10
    assert abs(np.trace(st_.rho) - 1) < 1e-12
    assert np.abs(st_.rho - st_.rho.conj().T).max() < 1e-10
    assert np.linalg.eigvalsh(0.5 * (st_.rho + st_.rho.conj().T)).min() > -1e-8


def test_solver_paths_agree():
    m = dimer_model(delta=0.01, n_max=5)
    lmat = build_liouvillian(m)
    ref = steady_state(lmat, m.n_max, method="direct").rho
    it = steady_state(lmat, m.n_max, method="iterative", solver=IterativeSolver()).rho
    pw = steady_state(lmat, m.n_max, method="power").rho
    assert np.abs(it - ref).max() < 1e-10 and np.abs(pw - ref).max() < 1e-10


def test_classical_limit():
    m = TwoModeModel(0.0, 0.047, 20.0, 0.171, 0.171, 0.0188, 1.0, n_max=6)
    res = detuning_sweep(m, np.linspace(-0.5, 0.5, 5))
    assert np.all(np.abs(res.column("g11") - 1) < 0.01)


def test_kerr_crossover():
    m = TwoModeModel(0.0, 0.0, 0.01, 0.2, 0.2, 0.0, 0.0, n_max=6)
    m = replace(m, pump_amp=default_pump(m))
    g11 = detuning_sweep(m, np.linspace(-0.3, 0.3, 25)).column("g11")
    assert g11.min() < 1 < g11.max()


def test_default_pump_peak_population():
    m = dimer_model()
    # the bright combination (a_L + a_R)/sqrt(2) sits at delta = -J
    n = np.abs(coherent_amplitudes(m.with_delta(-m.j_coupling))) ** 2
    assert np.allclose(n, DEFAULT_PEAK_POPULATION, rtol=1e-12)
    d = default_deltas(m)
    assert d.size == 161 and d[-1] == pytest.approx(3 * 0.171) and d[0] == -d[-1]


def test_sweep_rows_and_paired_run():
    m = dimer_model(n_max=5)
    deltas = [0.1, -0.1, 0.0]
    res = detuning_sweep(m, deltas, paired_zero_u12=True)
    assert [r.delta for r in res.rows] == deltas
    assert all(r.converged for r in res.rows + res.paired)
    direct = sweep_point(replace(m, u12=0.0), 0.0)
    assert res.paired[2].g12 == direct.g12
    assert res.max_cs_ratio() == max(r.cs_ratio for r in res.rows)
    for r in res.rows:
        assert r.cs_ratio == pytest.approx(r.g12 / math.sqrt(r.g11 * r.g22))
        assert r.cs_violation == (r.cs_ratio > 1)


def test_sweep_failure_is_reported_per_row():
    m = TwoModeModel(0.0, 0.0, 0.01, 0.0, 0.0, 0.0, 0.0, n_max=4)
    res = detuning_sweep(m, [0.0, 0.1])
    assert all(not r.converged and "VacuousPopulation" in r.error for r in res.rows)
    assert math.isnan(res.max_cs_ratio())


def test_parallel_sweep_identical():
    m = dimer_model(n_max=4)
    deltas = np.linspace(-0.2, 0.2, 6)
    a = detuning_sweep(m, deltas, workers=1)
    b = detuning_sweep(m, deltas, workers=2)
    assert [r.as_list() for r in a.rows] == [r.as_list() for r in b.rows]
