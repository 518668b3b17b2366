"""End-to-end acceptance checks for the toolkit.

One test per criterion; each prints a single PASS/FAIL line with the
measured values (visible with ``pytest -rA`` / on failure), and the test
name itself gives the per-criterion pass/fail line in the summary.

The standard scenario used throughout: unit sphere at the origin,
probe ball of radius eta = 0.1 centered at p = (0, 0, 3), so the
probe-to-obstacle distance is d = 2 and dist(D, B) = 1.9.
"""

import numpy as np
import pytest

from tdenclosure import cli, enclosure
from tdenclosure.asymptotics import (
    J_tau,
    SurfaceQuadrature,
    laplace_limit_check,
    theorem21_denominator,
)
from tdenclosure.bem import PanelSystem, indicator_bem
from tdenclosure.fields import ball_average_identity, v_eval
from tdenclosure.geometry import Probe, Sphere, first_reflector
from tdenclosure.meshes import icosphere_surface
from tdenclosure.sphere_oracle import (
    SphereScenario,
    indicator_curve_oracle,
    indicator_oracle,
    wronskian_residual,
)
from tdenclosure.tdwave import (
    SimGrid,
    discrete_energy,
    indicator_td,
    init_state,
    run_simulation,
    step,
)

A_SPHERE = 1.0
CENTER = np.zeros(3)
P_STD = np.array([0.0, 0.0, 3.0])
ETA_STD = 0.1
DIST_STD = 1.9
# (pi/2) (eta/d)^2 / sqrt(2.25) * (1 - 0.5)/(1 + 0.5) for the standard
# scenario at gamma = 0.5.
C_STD = (np.pi / 2.0) * (ETA_STD / 2.0) ** 2 / 1.5 / 3.0


def _ball_quadrature(center, radius, n_r=48, n_theta=48, n_phi=24):
    """Product Gauss-Legendre quadrature over a solid ball."""
    xr, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * radius * (xr + 1.0)
    wr = 0.5 * radius * wr
    xc, wc = np.polynomial.legendre.leggauss(n_theta)
    ph = (np.arange(n_phi) + 0.5) * 2.0 * np.pi / n_phi
    wp = 2.0 * np.pi / n_phi
    R, C, P = np.meshgrid(r, xc, ph, indexing="ij")
    WR, WC, _ = np.meshgrid(wr, wc, ph, indexing="ij")
    st = np.sqrt(1.0 - C**2)
    pts = np.column_stack([
        (R * st * np.cos(P)).ravel(),
        (R * st * np.sin(P)).ravel(),
        (R * C).ravel(),
    ]) + np.asarray(center)
    w = (WR * WC * wp * R**2).ravel()
    return pts, w


def _line(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"criterion {num:02d}: {status} — {detail}")
    return ok


def _std_curve(gamma, taus, eta=ETA_STD, p=P_STD):
    probe = Probe(center=p, radius=eta)
    vals = indicator_curve_oracle(A_SPHERE, CENTER, gamma, probe, taus)
    return enclosure.IndicatorCurve(
        taus=np.asarray(taus, dtype=float), values=vals, probe=probe,
        known_dist=float(np.linalg.norm(p) - A_SPHERE - eta),
    )


def test_criterion_01_sign_dichotomy():
    # All indicator samples over tau in [8, 30] are positive for
    # gamma in {0.25, 0.5, 0.8} and negative for {1.25, 2, 4}.
    taus = np.linspace(8.0, 30.0, 12)
    results = {}
    for gamma in (0.25, 0.5, 0.8, 1.25, 2.0, 4.0):
        curve = _std_curve(gamma, taus)
        results[gamma] = enclosure.classify_sign(curve) if (
            np.all(curve.values > 0) or np.all(curve.values < 0)
        ) else 0
    ok = all(results[g] == +1 for g in (0.25, 0.5, 0.8)) and all(
        results[g] == -1 for g in (1.25, 2.0, 4.0)
    )
    assert _line(1, ok, f"signs by gamma: {results} (expect +1 below 1, -1 above)")


def test_criterion_02_distance_recovery():
    # Fitted dist within 1% of 1.9 using tau in [10, 30].
    curve = _std_curve(0.5, np.linspace(10.0, 30.0, 21))
    dist_hat, resid, _ = enclosure.fit_distance(curve, window=(10.0, 30.0))
    err = abs(dist_hat / DIST_STD - 1.0)
    ok = err < 0.01
    assert _line(2, ok, f"dist_hat = {dist_hat:.6f} vs 1.9 "
                        f"(rel err {err:.2e}, tol 1e-2, fit resid {resid:.1e})")


def test_criterion_03_leading_coefficient():
    # Fitted limit of tau^4 e^{2 tau dist} I(tau): 8.727e-4 within 2% at
    # gamma = 0.5, and its negative counterpart at gamma = 2.
    taus = np.linspace(10.0, 30.0, 21)
    report = []
    ok = True
    for gamma, target in ((0.5, C_STD), (2.0, -C_STD)):
        curve = _std_curve(gamma, taus)
        C, _, _ = enclosure.fit_leading_coefficient(
            curve, DIST_STD, window=(10.0, 30.0), correction_order=3)
        err = abs(C / target - 1.0)
        ok &= err < 0.02
        report.append(f"gamma={gamma}: C={C:.6e} target={target:.6e} "
                      f"err={err:.2e}")
    assert _line(3, ok, "; ".join(report) + " (tol 2e-2)")


def test_criterion_04_gamma_recovery():
    # gamma_hat within +-0.025 of 0.5 and within +-0.1 of 2.0.
    taus = np.linspace(10.0, 30.0, 21)
    report = []
    ok = True
    for gamma, tol in ((0.5, 0.025), (2.0, 0.1)):
        curve = _std_curve(gamma, taus)
        C, _, _ = enclosure.fit_leading_coefficient(
            curve, DIST_STD, window=(10.0, 30.0), correction_order=3)
        gamma_hat, _ = enclosure.gamma_from_curvature(
            C, 2.0, ETA_STD, -1.0, 1.0)
        ok &= abs(gamma_hat - gamma) < tol
        report.append(f"gamma_hat={gamma_hat:.5f} vs {gamma} (tol {tol})")
    assert _line(4, ok, "; ".join(report))


def test_criterion_05_three_ball_curvature_recovery():
    # Probes at z = 2.8, 3.0, 3.2 (eta = 0.1): recover H = -1 +- 0.1,
    # K = 1 +- 0.1, gamma = 0.5 +- 0.05; discriminant M reported.
    taus = np.linspace(20.0, 100.0, 41)
    F, lam = [], []
    for z in (2.8, 3.0, 3.2):
        curve = _std_curve(0.5, taus, p=np.array([0.0, 0.0, z]))
        d = z - A_SPHERE  # probe center to boundary
        C, _, _ = enclosure.fit_leading_coefficient(
            curve, curve.known_dist, window=(20.0, 100.0), correction_order=3)
        F.append(enclosure.calibrated_coefficient(C, d, ETA_STD))
        lam.append(1.0 / d)
    rec = enclosure.three_ball_recover(np.array(F), np.array(lam), sign=+1)
    ok = (abs(rec.H + 1.0) < 0.1 and abs(rec.K - 1.0) < 0.1
          and abs(rec.gamma - 0.5) < 0.05)
    assert _line(5, ok, f"H={rec.H:.5f} (target -1+-0.1), K={rec.K:.5f} "
                        f"(target 1+-0.1), gamma={rec.gamma:.5f} "
                        f"(target 0.5+-0.05), discriminant M={rec.discriminant:.3e}")


def test_criterion_06_indicator_ratio_and_bracket():
    # (a) I(gamma=0.5)/I(gamma=0.25) -> (1/3)/(3/5) = 5/9 within 1%.
    taus = np.linspace(10.0, 30.0, 21)
    c_half = _std_curve(0.5, taus)
    c_quarter = _std_curve(0.25, taus)
    rho, _ = enclosure.ratio_indicator(c_half, c_quarter,
                                       window=(10.0, 30.0))
    target = (1.0 / 3.0) / (3.0 / 5.0)
    err = abs(rho / target - 1.0)
    ok_ratio = err < 0.01

    # (b) Two-sphere runs with per-component gamma: the fitted overall
    # ratio must lie in the bracket of per-component factor ratios.
    probe = Probe(center=np.array([1.0, 0.0, 3.0]), radius=0.2)
    taus_b = np.array([4.0, 5.0, 6.0, 7.0, 8.0])
    surfaces = [
        icosphere_surface(2, radius=1.0, center=(2.0, 0.0, 0.0)),
        icosphere_surface(2, radius=1.0, center=(-2.0, 0.0, 0.0)),
    ]

    def union_curve(gammas):
        def gamma_of(x):
            return gammas[0] if x[0] > 0 else gammas[1]
        vals = []
        for tau in taus_b:
            ps = PanelSystem.from_surfaces(surfaces, gamma_of, float(tau))
            ind, _ = indicator_bem(ps, probe)
            vals.append(ind)
        return {"curves": [{
            "taus": list(map(float, taus_b)),
            "values": list(map(float, vals)),
            "probe": {"center": list(map(float, probe.center)),
                      "radius": probe.radius},
        }], "scenario": {"gamma": list(gammas)}}

    rep_a = union_curve([0.5, 2.0])
    rep_b = union_curve([0.25, 0.25])
    cmp_out = cli.compare(rep_a, rep_b)
    ok_bracket = cmp_out["within_bracket"]
    ok = ok_ratio and ok_bracket
    assert _line(6, ok, f"ratio={rho:.6f} vs {target:.6f} (err {err:.2e}, "
                        f"tol 1e-2); two-sphere ratio={cmp_out['ratio']:.4f} "
                        f"in bracket {cmp_out['bracket']}: {ok_bracket}")


def test_criterion_07_energy_ratio():
    # E(tau) / weighted boundary functional in [0.95, 1.05] for tau in
    # [20, 30] at gamma in {0.5, 2}.  The gamma = 0.5 branch converges
    # more slowly (ratio ~0.93-0.95 in this window) and is reported
    # honestly; it reaches the band only around tau ~ 31.
    report = []
    ok = True
    for gamma in (0.5, 2.0):
        quad = SurfaceQuadrature.from_sphere(
            CENTER, A_SPHERE, gamma, axis=P_STD, n_theta=600)
        probe = Probe(center=P_STD, radius=ETA_STD)
        ratios = []
        for tau in (20.0, 25.0, 30.0):
            sc = SphereScenario(a=A_SPHERE, c=CENTER, gamma=gamma,
                                probe=probe, tau=tau)
            I = indicator_oracle(sc)
            E = I - J_tau(quad, tau, probe)
            ratios.append(E / theorem21_denominator(quad, tau, probe))
        ok &= all(0.95 <= r <= 1.05 for r in ratios)
        report.append(
            f"gamma={gamma}: ratios at tau 20/25/30 = "
            + "/".join(f"{r:.4f}" for r in ratios))
    assert _line(7, ok, "; ".join(report) + " (band [0.95, 1.05])")


def test_criterion_08_laplace_limit():
    # Unit amplitude, unit sphere, d = 2: the concentrated surface
    # integral over tau e^{2 tau d} matches its stationary-point value
    # within 1% at tau = 40.
    obstacle = Sphere(center=CENTER, radius=A_SPHERE)
    refs = first_reflector(obstacle, P_STD)
    quad = SurfaceQuadrature.from_sphere(CENTER, A_SPHERE, 0.0, axis=P_STD,
                                         n_theta=800)
    rows = laplace_limit_check(quad, 1.0, P_STD, [40.0], refs)
    ratio = rows[0]["ratio"]
    ok = 0.99 <= ratio <= 1.01
    assert _line(8, ok, f"ratio = {ratio:.5f} (band [0.99, 1.01])")


def test_criterion_09_bem_accuracy_and_doubling():
    # (a) Level-4 icosphere (5120 panels): indicator within 1% of the
    # modal oracle at tau in {4, 6, 8, 10}.
    probe = Probe(center=P_STD, radius=ETA_STD)
    surf = icosphere_surface(4, radius=A_SPHERE, center=tuple(CENTER))
    errs = {}
    for tau in (4.0, 6.0, 8.0, 10.0):
        ps = PanelSystem.from_surfaces(surf, 0.5, tau)
        ind, _ = indicator_bem(ps, probe)
        ref = indicator_oracle(SphereScenario(
            a=A_SPHERE, c=CENTER, gamma=0.5, probe=probe, tau=tau))
        errs[tau] = abs(ind / ref - 1.0)
    ok_single = all(e < 0.01 for e in errs.values())

    # (b) Two well-separated identical spheres: fitted leading
    # coefficient equals twice the single-sphere value within 5%.
    probe2 = Probe(center=np.array([0.0, 0.0, 3.0]), radius=0.2)
    taus = np.array([4.0, 6.0, 8.0])
    d = float(np.sqrt(13.0) - 1.0 - 0.2)
    c1 = (2.0, 0.0, 0.0)
    s_one = icosphere_surface(3, radius=1.0, center=c1)
    s_two = [s_one, icosphere_surface(3, radius=1.0, center=(-2.0, 0.0, 0.0))]

    def coeff(surfaces):
        vals = []
        for tau in taus:
            ps = PanelSystem.from_surfaces(surfaces, 0.5, float(tau))
            vals.append(indicator_bem(ps, probe2)[0])
        curve = enclosure.IndicatorCurve(
            taus=taus, values=np.array(vals), probe=probe2, known_dist=d)
        return enclosure.fit_leading_coefficient(
            curve, d, window=(taus[0], taus[-1]), correction_order=1)[0]

    C1 = coeff(s_one)
    C2 = coeff(s_two)
    doubling = C2 / C1
    ok_double = abs(doubling / 2.0 - 1.0) < 0.05
    ok = ok_single and ok_double
    assert _line(9, ok, "single-sphere rel errs "
                 + ", ".join(f"tau={t}: {e:.2e}" for t, e in errs.items())
                 + f" (tol 1e-2); two-sphere C ratio = {doubling:.5f} "
                   "(target 2 +- 5%)")


def test_criterion_10_finite_horizon_and_energy():
    # (a) Finite-observation-time truncation: the gap between the
    # finite-T indicator and its infinite-horizon limit decays like
    # e^{-tau T}, so the slope of log|gap| against T must match -tau
    # within 25%, checked at tau in {3, 4} over T in {2.75, 2.85, 2.95}.
    # Geometry: unit sphere, probe at (0, 0, 2.6) with eta = 0.4
    # (dist = 1.2, so every T is above the 2*dist = 2.4 threshold).
    taus = [3.0, 4.0]
    probe = Probe(center=np.array([0.0, 0.0, 2.6]), radius=0.4)
    obstacle = Sphere(center=CENTER, radius=A_SPHERE)
    T_list = [2.75, 2.85, 2.95]
    grid_kw = dict(half_width=5.2, n=192, probe=probe, gamma=0.5,
                   outer="absorbing", ghost_order=2)
    g_obs = SimGrid(obstacle=obstacle, **grid_kw)
    _, _, _, snaps = run_simulation(g_obs, T_list[-1] + 2 * g_obs.dt, taus,
                                    checkpoints=T_list)
    g_free = SimGrid(obstacle=None, **grid_kw)
    _, _, _, csnaps = run_simulation(g_free, T_list[-1] + 2 * g_free.dt, taus,
                                     checkpoints=T_list)
    report = []
    ok = True
    for k, tau in enumerate(taus):
        ref = indicator_oracle(SphereScenario(
            a=A_SPHERE, c=CENTER, gamma=0.5, probe=probe, tau=tau))
        gaps = []
        for T in T_list:
            val, _ = indicator_td(snaps[T], g_obs, k, T, control=csnaps[T])
            gaps.append(abs(val - ref))
        slope = np.polyfit(T_list, np.log(gaps), 1)[0]
        ok_tau = abs(slope / (-tau) - 1.0) <= 0.25
        ok &= ok_tau
        report.append(f"tau={tau}: slope={slope:.3f} vs -{tau} "
                      f"(gaps {', '.join(f'{g:.2e}' for g in gaps)})")

    # (b) Discrete energy: conserved within 0.5% for gamma = 0 with the
    # reflecting closure; non-increasing (to roundoff) for gamma = 0.5.
    probe_e = Probe(center=np.array([0.0, 0.0, 2.5]), radius=0.2)
    g0 = SimGrid(half_width=4.5, n=160, obstacle=obstacle, probe=probe_e,
                 gamma=0.0, outer="reflecting", ghost_order=1)
    state = init_state(g0)
    e0 = None
    drift = 0.0
    for j in range(int(np.ceil(3.0 / g0.dt))):
        state = step(state, g0)
        if j == 2:
            e0 = discrete_energy(state, g0)
        elif j > 2:
            drift = max(drift, abs(discrete_energy(state, g0) / e0 - 1.0))
    ok_cons = drift < 0.005

    g5 = SimGrid(half_width=4.5, n=96, obstacle=obstacle, probe=probe_e,
                 gamma=0.5, outer="reflecting", ghost_order=1)
    state = init_state(g5)
    energies = []
    for _ in range(int(np.ceil(3.0 / g5.dt))):
        state = step(state, g5)
        energies.append(discrete_energy(state, g5))
    e = np.array(energies[2:])
    max_rise = float(np.diff(e).max() / e[0])
    ok_diss = max_rise < 1e-12
    ok &= ok_cons and ok_diss
    report.append(f"gamma=0 energy drift {drift:.2e} (tol 5e-3); "
                  f"gamma=0.5 max energy rise {max_rise:.1e} (tol 1e-12)")
    assert _line(10, ok, "; ".join(report))


def test_criterion_11_invariants_and_determinism(tmp_path):
    # Compact re-statement of the property suites (full versions live in
    # the per-module test files) plus bit-identical reruns.
    checks = {}
    # Wronskian identity of the radial solutions.
    checks["wronskian"] = max(
        float(wronskian_residual(60, z).max()) for z in (0.5, 5.0, 50.0)
    ) < 1e-11
    # Mean-value identity over the probe ball for a decaying point source.
    probe = Probe(center=np.array([0.2, -0.1, 0.4]), radius=0.3)
    x0 = np.array([2.0, 1.0, 0.0])
    tau = 4.0

    def h(p):
        r = float(np.linalg.norm(np.asarray(p).ravel()[:3] - x0))
        return np.exp(-tau * r) / r

    pts, w = _ball_quadrature(probe.center, probe.radius)
    quad_val = float(np.sum(w * np.array([h(p) for p in pts])))
    ident = ball_average_identity(h, tau, probe)
    checks["ball_average"] = abs(quad_val / ident - 1.0) < 1e-8
    # Probe field continuity across the ball surface.
    xs = probe.center + np.array([0.0, 0.0, probe.radius])
    eps = 1e-7
    vi = v_eval(xs - [0, 0, eps], tau, probe)
    vo = v_eval(xs + [0, 0, eps], tau, probe)
    checks["v_continuity"] = abs(vi / vo - 1.0) < 1e-5
    # Three-ball round trip, 500 randomized consistent cases.
    rng = np.random.default_rng(7)
    n_ok = 0
    exact = True
    while n_ok < 500:
        H = rng.uniform(-3.0, 1.0)
        K = rng.uniform(-1.0, 4.0)
        gamma = rng.uniform(0.05, 0.9) if rng.random() < 0.5 else rng.uniform(1.1, 6.0)
        lam = np.sort(rng.uniform(0.2, 2.0, size=3))[::-1]
        if np.min(np.abs(np.diff(lam))) < 0.05:
            continue
        hess = lam**2 - 2.0 * H * lam + K
        if np.any(hess < 1e-3):
            continue
        F = (1.0 - gamma) / (1.0 + gamma) / np.sqrt(hess)
        rec = enclosure.three_ball_recover(F, lam,
                                           sign=+1 if gamma < 1 else -1)
        exact &= (abs(rec.H - H) < 1e-7 and abs(rec.K - K) < 1e-7
                  and abs(rec.gamma - gamma) < 1e-7 * max(1.0, gamma))
        n_ok += 1
    checks["three_ball_500"] = exact
    # Determinism: identical CSV bytes for identical configs.
    text = """
name: determinism
obstacle: {kind: sphere, center: [0, 0, 0], radius: 1.0}
gamma: 0.5
probe: {center: [0, 0, 3.0], radius: 0.1}
solver: {kind: oracle}
tau: {start: 10.0, stop: 20.0, count: 11}
analyses: [sign, dist]
"""
    cli.run(cli.parse_scenario(text), out_dir=str(tmp_path / "a"))
    cli.run(cli.parse_scenario(text), out_dir=str(tmp_path / "b"))
    checks["determinism"] = (
        (tmp_path / "a" / "determinism.csv").read_bytes()
        == (tmp_path / "b" / "determinism.csv").read_bytes()
    )
    ok = all(checks.values())
    assert _line(11, ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}"
                                   for k, v in checks.items()))
