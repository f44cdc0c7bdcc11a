import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridres import powerflow
from gridres.grid import Bus, Generator, Line, Load, Network
from gridres.powerflow import build_admittance, bus_injections, solve, solve_batch

from conftest import CATALOG, UG, random_radial


def two_bus(length_km: float) -> Network:
    buses = (Bus(0, 0.4, 0, 0), Bus(1, 0.4, length_km, 0))
    return Network("two-bus", buses, (Line(0, 0, 1, length_km, UG),), (Load(0, 1, "x"),),
                   (Generator(0, 0, None, is_slack_connection=True),), catalog=CATALOG)


def two_bus_closed_form(r: float, x: float, p: float, q: float) -> tuple[float, float]:
    """Receiving-end voltage (magnitude, angle) for a load p + jq behind impedance r + jx, sending end 1∠0.

    With the receiving end as reference, V1 = v + (r p + x q)/v + j (x p - r q)/v,
    so v^2 solves v^4 + (2(r p + x q) - 1) v^2 + (r^2 + x^2)(p^2 + q^2) = 0.
    """
    b = 2.0 * (r * p + x * q) - 1.0
    c = (r * r + x * x) * (p * p + q * q)
    v = math.sqrt((-b + math.sqrt(b * b - 4.0 * c)) / 2.0)
    angle = -math.atan2((x * p - r * q) / v, v + (r * p + x * q) / v)
    return v, angle


@pytest.mark.parametrize("length, p, q", [(0.1, 0.05, 0.01), (0.3, 0.1, 0.03), (0.05, 0.0, 0.02),
                                          (0.2, -0.04, 0.0)])
def test_two_bus_matches_closed_form(length, p, q):
    net = two_bus(length)
    z_base = 0.4 ** 2 / powerflow.S_BASE_MVA
    r, x = UG.r_per_km * length / z_base, UG.x_per_km * length / z_base
    sol = solve(net, build_admittance(net, [0]), np.array([0.0, -(p + 1j * q)]))
    v, angle = two_bus_closed_form(r, x, p, q)
    assert sol.converged
    assert abs(sol.vm[1] - v) < 1e-8
    assert abs(sol.va[1] - angle) < 1e-8
    assert abs(sol.losses_mw - (p * p + q * q) / v ** 2 * r) < 1e-8
    assert abs(sol.slack_p_mw - p - sol.losses_mw) < 1e-8


def _balance_error(net, inj) -> float:
    sol = solve(net, build_admittance(net, [ln.id for ln in net.lines]), inj)
    assert sol.converged
    return abs(sol.slack_p_mw + inj[1:].real.sum() - sol.losses_mw)


def test_power_balance_random_radial():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(200):
        net, inj = random_radial(rng, int(rng.integers(2, 30)))
        worst = max(worst, _balance_error(net, inj))
    assert worst < 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 25))
def test_power_balance_property(seed, n_bus):
    net, inj = random_radial(np.random.default_rng(seed), n_bus)
    assert _balance_error(net, inj) < 1e-6


def test_losses_equal_branch_i2r():
    rng = np.random.default_rng(3)
    net, inj = random_radial(rng, 15)
    adm = build_admittance(net, [ln.id for ln in net.lines])
    sol = solve(net, adm, inj)
    V = sol.vm * np.exp(1j * sol.va)
    total = 0.0
    for ln in net.lines:
        z = complex(ln.conductor.r_per_km, ln.conductor.x_per_km) * ln.length / 0.16
        i = (V[ln.from_bus] - V[ln.to_bus]) / z
        total += abs(i) ** 2 * z.real
    assert abs(total - sol.losses_mw) < 1e-9


def test_sparse_path_matches_dense(monkeypatch):
    rng = np.random.default_rng(8)
    net, inj = random_radial(rng, 60)
    adm = build_admittance(net, [ln.id for ln in net.lines])
    sparse = solve(net, adm, inj)
    monkeypatch.setattr(powerflow, "_DENSE_MAX", 10_000)
    dense = solve(net, adm, inj)
    assert sparse.converged and dense.converged
    np.testing.assert_allclose(sparse.vm, dense.vm, atol=1e-9)
    np.testing.assert_allclose(sparse.va, dense.va, atol=1e-9)


def test_batch_matches_single_steps():
    rng = np.random.default_rng(5)
    net, inj = random_radial(rng, 12)
    adm = build_admittance(net, [ln.id for ln in net.lines])
    batch = np.vstack([inj * s for s in (0.2, 1.0, 1.7)])
    sol = solve_batch(net, adm, batch)
    for k in range(3):
        one = solve(net, adm, batch[k])
        np.testing.assert_allclose(sol.vm[k], one.vm, atol=1e-12)
        assert abs(sol.losses_mw[k] - one.losses_mw) < 1e-12


def test_open_line_deenergizes_downstream():
    net = two_bus(0.1)
    adm = build_admittance(net, [])
    sol = solve(net, adm, np.array([0.0, -0.05]))
    assert adm.n == 1
    assert math.isnan(sol.vm[1]) and math.isnan(sol.loading[0])
    assert sol.losses_mw == 0.0 and abs(sol.slack_p_mw) < 1e-12


def test_no_load_flat_profile(rural):
    net, _ = rural
    adm = build_admittance(net, [ln.id for ln in net.lines])
    sol = solve(net, adm, np.zeros(len(net.buses)))
    np.testing.assert_allclose(sol.vm, 1.0, atol=1e-12)
    assert abs(sol.losses_mw) < 1e-12


def test_bus_injections_sum_elements(rural):
    net, ts = rural
    p, q = ts.element_matrix(net.loads)
    inj = bus_injections(net, p[:3], q[:3])
    np.testing.assert_allclose(inj.real.sum(axis=1), -p[:3].sum(axis=1))


def test_overloaded_case_reports_nonconvergence():
    net = two_bus(0.3)
    sol = solve(net, build_admittance(net, [0]), np.array([0.0, -5.0]))
    assert not sol.converged
