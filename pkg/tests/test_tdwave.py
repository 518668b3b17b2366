import numpy as np
import pytest

from tdenclosure.geometry import Probe, Sphere
from tdenclosure.tdwave import (
    CFL_LIMIT,
    ConfigError,
    InstabilityError,
    SimGrid,
    TransformAccumulator,
    WaveState,
    discrete_energy,
    indicator_td,
    init_state,
    run_simulation,
    step,
)


def _free_grid(n=48, half_width=2.0, eta=0.3, outer="reflecting", **kw):
    return SimGrid(
        half_width=half_width, n=n, obstacle=None,
        probe=Probe(center=np.zeros(3), radius=eta), outer=outer, **kw,
    )


def test_config_validation():
    with pytest.raises(ConfigError):
        _free_grid(cfl=CFL_LIMIT)
    with pytest.raises(ConfigError):
        _free_grid(ghost_order=3)
    with pytest.raises(ConfigError):
        _free_grid(outer="open")


def test_probe_overlapping_obstacle_rejected():
    with pytest.raises(ConfigError):
        SimGrid(
            half_width=2.0, n=48,
            obstacle=Sphere(center=np.zeros(3), radius=1.0),
            probe=Probe(center=np.array([0.0, 0.0, 1.0]), radius=0.3),
        )


def test_initial_state_momentum_and_support():
    # u(0) = 0, u(dt) = dt * chi_B: the launched momentum integrates to
    # the probe-ball volume, and the support is confined to the ball.
    g = _free_grid(n=64)
    st = init_state(g)
    assert np.all(st.u_prev == 0.0)
    vol = float(st.u_curr.sum()) * g.h**3 / g.dt
    assert vol == pytest.approx(4.0 / 3.0 * np.pi * 0.3**3, rel=1e-2)
    X, Y, Z = np.meshgrid(g.axis, g.axis, g.axis, indexing="ij")
    outside = X**2 + Y**2 + Z**2 > (0.3 + g.h) ** 2
    assert np.all(st.u_curr[outside] == 0.0)


def test_wavefront_speed_unity():
    # A gauge at distance r stays silent until t ~ r - eta and must be
    # active shortly after (unit propagation speed).
    g = _free_grid(n=64, half_width=2.0, eta=0.3)
    r = 1.2
    _, _, gauges = run_simulation(g, T=1.4, taus=[1.0],
                                  gauge_points=[[0.0, 0.0, r]])
    t = gauges[:, 0]
    u = np.abs(gauges[:, 1])
    thresh = 1e-3 * u.max()
    arrival = t[np.argmax(u > thresh)]
    assert arrival == pytest.approx(r - 0.3, abs=4 * g.h)


def test_interior_quiet_after_wave_passes():
    # Strong Huygens principle: behind the outgoing shell the solution
    # returns to a constant-in-time plateau (zero time derivative).
    g = _free_grid(n=64, half_width=2.0, eta=0.3)
    state = init_state(g)
    n_steps = int(np.ceil(1.2 / g.dt))
    for _ in range(n_steps):
        state = step(state, g)
    dudt_center = abs(
        state.u_curr[g.n // 2, g.n // 2, g.n // 2]
        - state.u_prev[g.n // 2, g.n // 2, g.n // 2]
    ) / g.dt
    # The initial rate at the center is 1 (unit source density); what
    # remains after the shell departs is the grid-dispersion tail, which
    # at this resolution is below one percent of that.
    assert dudt_center < 1e-2


def test_transform_accumulator_synthetic_decay():
    # Feed u(x, t) = f(x) e^{-t}: the accumulated transform must equal
    # f(x) (1 - e^{-(tau+1) T}) / (tau + 1) to trapezoid accuracy.
    g = _free_grid(n=32, half_width=1.0, eta=0.3)
    taus = np.array([2.0, 5.0])
    acc = TransformAccumulator.create(g, taus)
    f = g.probe_frac.copy()
    n_steps = 400
    for k in range(1, n_steps + 1):
        t = k * g.dt
        stt = WaveState(u_prev=f * np.exp(-(t - g.dt)), u_curr=f * np.exp(-t),
                        step_index=k)
        acc.accumulate(stt)
    T = n_steps * g.dt
    w = acc.transform()
    fc = f[acc.cells[:, 0], acc.cells[:, 1], acc.cells[:, 2]]
    for k, tau in enumerate(taus):
        expected = fc * (np.exp(-(tau + 1.0) * g.dt)
                         - np.exp(-(tau + 1.0) * T)) / (tau + 1.0)
        # add the leading trapezoid half-sample at t = dt
        expected += 0.5 * g.dt * fc * np.exp(-(tau + 1.0) * g.dt)
        np.testing.assert_allclose(w[k], expected, rtol=5e-3, atol=1e-14)


def _obstacle_grid(n=64, gamma=0.5, **kw):
    kw.setdefault("outer", "reflecting")
    return SimGrid(
        half_width=3.0, n=n,
        obstacle=Sphere(center=np.zeros(3), radius=1.0),
        probe=Probe(center=np.array([0.0, 0.0, 2.0]), radius=0.2),
        gamma=gamma, **kw,
    )


def test_energy_conserved_sound_hard():
    # gamma = 0 with the reflecting outer closure: the leapfrog energy is
    # conserved up to the first-order boundary closure error.
    g = _obstacle_grid(gamma=0.0)
    state = init_state(g)
    e0 = None
    n_steps = int(np.ceil(2.5 / g.dt))
    for k in range(n_steps):
        state = step(state, g)
        if k == 2:
            e0 = discrete_energy(state, g)
    e1 = discrete_energy(state, g)
    assert abs(e1 / e0 - 1.0) < 0.02


def test_energy_nonincreasing_dissipative():
    g = _obstacle_grid(gamma=0.5)
    state = init_state(g)
    energies = []
    n_steps = int(np.ceil(2.5 / g.dt))
    for _ in range(n_steps):
        state = step(state, g)
        energies.append(discrete_energy(state, g))
    e = np.array(energies[2:])
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    # and it genuinely dissipates once the wave reaches the obstacle
    assert e[-1] < 0.99 * e[0]


def test_indicator_sign_with_control_run():
    # gamma = 0.5 < 1: positive indicator once T > 2 dist(D, B).
    taus = [3.0]
    g = _obstacle_grid(gamma=0.5, outer="absorbing")
    acc, _, _ = run_simulation(g, T=2.2, taus=taus)
    gc = _free_grid(n=64, half_width=3.0, eta=0.2, outer="absorbing")
    # control probe must sit at the same location
    gc = SimGrid(half_width=3.0, n=64, obstacle=None,
                 probe=Probe(center=np.array([0.0, 0.0, 2.0]), radius=0.2),
                 outer="absorbing")
    cacc, _, _ = run_simulation(gc, T=2.2, taus=taus)
    val, warns = indicator_td(acc, g, 0, T=2.2, control=cacc)
    assert val > 0
    assert warns == []


def test_indicator_T_gate():
    taus = [3.0]
    g = _obstacle_grid(gamma=0.5)
    acc, _, _ = run_simulation(g, T=1.0, taus=taus)
    # dist(D, B) = 0.8: T = 1.0 < 1.6 fails strict, passes relaxed with a
    # warning; T = 0.5 < 0.8 fails even relaxed.
    with pytest.raises(ConfigError):
        indicator_td(acc, g, 0, T=1.0)
    _, warns = indicator_td(acc, g, 0, T=1.0, relaxed_T=True)
    assert warns
    with pytest.raises(ConfigError):
        indicator_td(acc, g, 0, T=0.5, relaxed_T=True)


def test_instability_detection():
    g = _obstacle_grid(gamma=0.5)
    state = init_state(g)
    with pytest.raises(InstabilityError):
        for _ in range(10):
            state = step(state, g, amplitude_cap=1e-9)


def test_checkpoints_freeze_partial_transforms():
    g = _free_grid(n=48, half_width=2.0, eta=0.3, outer="absorbing")
    acc, _, _, snaps = run_simulation(g, T=1.0, taus=[2.0],
                                      checkpoints=[0.5])
    assert set(snaps) == {0.5}
    partial = snaps[0.5].transform()
    full = acc.transform()
    assert snaps[0.5].steps_seen < acc.steps_seen
    # The partial transform is a genuinely different (smaller-horizon) sum.
    assert not np.allclose(partial, full)


def test_transform_tau_monotonicity():
    # Larger tau weights early times more: |w| decreases with tau.
    g = _free_grid(n=48, half_width=2.0, eta=0.3, outer="absorbing")
    acc, _, _ = run_simulation(g, T=1.5, taus=[2.0, 4.0, 8.0])
    w = acc.transform()
    norms = np.abs(w).sum(axis=1)
    assert norms[0] > norms[1] > norms[2]
