import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bridgeplate.energy import (
    CSV_COLUMNS,
    EnergyOptions,
    EnergyRecord,
    energy,
    fit_decay_rate,
    initial_functional,
    read_energy_csv,
    threshold_check,
    write_energy_csv,
)
from bridgeplate.errors import NotApplicable
from bridgeplate.fractional import FractionalParams, FractionalState, init_fractional
from bridgeplate.memory import ExponentialHistory, ExponentialKernel, MemoryParams, MemoryState, init_memory
from bridgeplate.newmark import SimState
from bridgeplate.plate import solve_static

FRAC = FractionalParams(0.95, 2.5, 1.0, 10 * math.pi, 100)
MEM = MemoryParams(8.0, 16, ExponentialKernel(1e-4, 2.0), ExponentialHistory("scaled-initial", 2.0))


def random_bundle(sys, seed, scale=0.1):
    rng = np.random.default_rng(seed)
    n = sys.n
    state = SimState(scale * rng.standard_normal(n), scale * rng.standard_normal(n), np.zeros(n))
    phi = FractionalState(scale * rng.standard_normal((FRAC.L + 1, n)))
    mu = MemoryState(scale * rng.standard_normal((MEM.M + 1, n)))
    return state, phi, mu


def zero_bundle(n):
    z = np.zeros(n)
    return SimState(z, z.copy(), z.copy()), init_fractional(FRAC, n), init_memory(MEM, z)


@pytest.mark.parametrize("weighted", [False, True])
def test_zero_state(desk_system, weighted):
    _, _, _, sys = desk_system
    rec = energy(*zero_bundle(sys.n), sys, FRAC, MEM, EnergyOptions(4.0, weighted_energy=weighted))
    assert rec.E == rec.E_kin == rec.E_elastic == rec.E_frac == rec.E_source == rec.E_mem == 0.0


def test_pure_displacement(table_system):
    _, _, _, sys = table_system
    x, _ = sys.grid.mesh()
    U = solve_static(sys, np.sin(x))
    state, phi, mu = zero_bundle(sys.n)
    state.U = U
    rec = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(4.0, source_enabled=False))
    cell = sys.grid.dx * sys.grid.dy
    assert rec.E == pytest.approx(0.5 * sys.lambda_coef * (U @ (sys.K @ U)) * cell, rel=1e-12)
    assert rec.E > 0 and rec.E_source == 0.0


def test_displayed_elastic_term_is_indefinite(table_system):
    """K is self-adjoint only in the H inner product, so U^T K U can be negative."""
    _, _, _, sys = table_system
    x, y = sys.grid.mesh()
    state, phi, mu = zero_bundle(sys.n)
    state.U = np.sin(x) + 0.0 * y
    plain = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(4.0, source_enabled=False))
    weighted = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(4.0, source_enabled=False, weighted_energy=True))
    assert plain.E_elastic < 0 < weighted.E_elastic


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans(), st.booleans(), st.booleans())
def test_decomposition_and_signs(desk_system, seed, lp, wmem, weighted):
    _, _, _, sys = desk_system
    opts = EnergyOptions(3.0, consistent_lp_energy=lp, weighted_memory_energy=wmem, weighted_energy=weighted)
    rec = energy(*random_bundle(sys, seed), sys, FRAC, MEM, opts)
    parts = rec.E_kin + rec.E_elastic + rec.E_frac + rec.E_source + rec.E_mem
    assert rec.E == pytest.approx(parts, rel=1e-12)
    assert rec.E_kin >= 0 and rec.E_frac >= 0 and rec.E_mem >= 0
    assert rec.E_source <= 0
    if weighted:
        assert rec.E_elastic >= 0


def test_displayed_source_term(desk_system):
    _, _, _, sys = desk_system
    state, phi, mu = random_bundle(sys, 1)
    cell = sys.grid.dx * sys.grid.dy
    U = state.U
    plain = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(3.0))
    assert plain.E_source == pytest.approx(-((U @ U) ** 1.5) * cell / 3, rel=1e-13)
    lp = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(3.0, consistent_lp_energy=True))
    assert lp.E_source == pytest.approx(-(sys.weights @ np.abs(U) ** 3) / 3, rel=1e-13)


def test_weighted_forms(desk_system):
    _, _, _, sys = desk_system
    state, phi, mu = random_bundle(sys, 2)
    w = sys.weights
    rec = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(3.0, weighted_energy=True))
    assert rec.E_kin == pytest.approx(0.5 * state.V @ (w * state.V), rel=1e-13)
    assert rec.E_elastic == pytest.approx(0.5 * sys.lambda_coef * state.U @ (sys.G @ state.U), rel=1e-9)
    ref_frac = FRAC.kappa * FRAC.weight * np.einsum("ij,j,ij->", phi.phi, w, phi.phi)
    assert rec.E_frac == pytest.approx(ref_frac, rel=1e-13)
    assert rec.E_source == pytest.approx(-(w @ np.abs(state.U) ** 3) / 3, rel=1e-13)


def test_memory_weighting(desk_system):
    _, _, _, sys = desk_system
    state, phi, mu = random_bundle(sys, 3)
    plain = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(3.0)).E_mem
    weighted = energy(state, phi, mu, sys, FRAC, MEM, EnergyOptions(3.0, weighted_memory_energy=True)).E_mem
    g = MEM.g_weights
    ref = 0.5 * MEM.ds * sum(g[m] * sys.energy_norm2_factored(mu.mu[m]) for m in range(MEM.M + 1))
    assert weighted == pytest.approx(ref, rel=1e-12)
    # no cell factor and full weight on the half-weight edge rows
    cell = sys.grid.dx * sys.grid.dy
    assert 1 / cell < plain / weighted < 2 / cell


def test_threshold_table_rows():
    ce3, lhs3 = 5.632082885891357, 0.305108317014464
    e3 = (lhs3 / ce3) ** 2 / 6.0
    r = threshold_check(e3, ce3, 3.0, 0.5, I0=1.0)
    assert r.lhs == pytest.approx(lhs3, rel=1e-13)
    assert r.rhs == pytest.approx(0.353553390593274, rel=1e-14)
    assert r.satisfied

    ce25, lhs25 = 3.351865562758652, 0.792476072196316
    e25 = (lhs25 / ce25) ** 4 / 10.0
    r = threshold_check(e25, ce25, 2.5, 0.5, I0=1.0)
    assert r.lhs == pytest.approx(lhs25, rel=1e-13)
    assert r.rhs == pytest.approx(0.420448207626857, rel=1e-14)
    assert not r.satisfied


def test_threshold_rhs_and_i0_gate():
    assert threshold_check(1e-4, 1.0, 4.0, 0.5, I0=1.0).rhs == 0.25
    assert not threshold_check(1e-8, 1.0, 4.0, 0.5, I0=-1.0).satisfied
    with pytest.raises(NotApplicable):
        threshold_check(-0.1, 1.0, 4.0, 0.5, I0=1.0)


def test_initial_functional():
    rec = EnergyRecord(0.0, 0.0, 0.0, 2.0, 0.5, -1.0, 0.25, 0.0, 0)
    assert initial_functional(rec, 4.0) == pytest.approx(2 * (2.0 + 0.5 + 0.25) - 4.0)


def test_fit_exponential():
    t = np.linspace(0.0, 50.0, 501)
    fit = fit_decay_rate(t, 3.0 * np.exp(-0.2 * t))
    assert fit.zeta_hat == pytest.approx(0.2, abs=1e-10)
    assert fit.theta_hat == pytest.approx(1.0, rel=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.window_start == pytest.approx(20.0)


def test_fit_constant_and_window():
    t = np.arange(10.0)
    fit = fit_decay_rate(t, np.full(10, 2.5))
    assert abs(fit.zeta_hat) <= 1e-12
    with pytest.raises(NotApplicable):
        fit_decay_rate(t, np.linspace(1.0, -1.0, 10))
    assert fit_decay_rate(t, np.exp(-t), start_fraction=0.0).window_start == 0.0


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    recs = [EnergyRecord(*rng.standard_normal(8).tolist(), int(k)) for k in range(5)]
    path = tmp_path / "energy.csv"
    write_energy_csv(recs, path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(CSV_COLUMNS) == "t,E,E_kin,E_elastic,E_frac,E_source,E_mem,max_abs_u,fp_iters"
    assert text.endswith("\n")
    assert read_energy_csv(path) == recs
