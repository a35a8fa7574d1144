"""The invariant suite behind ``qdsdc validate``.

Each check returns a ``CheckResult``; none of them raise on a failed
property. The sweep-level checks run full bias sweeps and take about a
minute on one core; ``quick=True`` skips them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .hilbert import (LABELS, Label, adjoint, dyad, emission_operator,
                      lindblad_dissipator, pure_dephasing_term)
from .model import (HBAR, DeviceModel, DissipatorRates, Frame, PulseSpec,
                    StarkModel, ac_stark_scale, default_frame, hamiltonian)
from .propagator import (TimeGrid, expm_oracle, ground_state,
                         max_frobenius_deviation, propagate)
from .spectrum import (FilterSpec, energy_axis, filtered_spectrum,
                       qrt_correlation, simulate_spectrum)
from .sweep import (classify_tracks, crossing_partner, run_sweep, scenario,
                    track_peaks)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def random_state(rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ adjoint(a)
    return rho / np.trace(rho).real


def undriven(m: DeviceModel | None = None, **rates) -> DeviceModel:
    m = m or DeviceModel()
    return replace(m, tpe=replace(m.tpe, amplitude=0.0),
                   control=replace(m.control, amplitude=0.0),
                   rates=replace(m.rates, **rates))


# ------------------------------------------------------------------ algebra


def check_dyad_algebra() -> CheckResult:
    bad = 0
    for a in LABELS:
        for b in LABELS:
            for c in LABELS:
                for d in LABELS:
                    want = dyad(a, d) if b == c else np.zeros((4, 4))
                    bad += not np.array_equal(dyad(a, b) @ dyad(c, d), want)
    return CheckResult("dyad algebra", bad == 0,
                       f"{256 - bad}/256 products correct")


def check_dissipators(n: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        rho = random_state(rng)
        s = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        for out in (lindblad_dissipator(s, rho),
                    pure_dephasing_term(rho, 0.3)):
            worst = max(worst, abs(np.trace(out)),
                        float(np.max(np.abs(out - adjoint(out)))))
    return CheckResult("dissipators Hermitian and traceless", worst <= 1e-12,
                       f"worst deviation {worst:.2e} over {n} states")


def check_emission_identity() -> CheckResult:
    s = emission_operator()
    ok = np.array_equal(adjoint(s) @ s,
                        dyad(Label.X_V, Label.X_V) + dyad(Label.B, Label.B))
    return CheckResult("sigma_V^+ sigma_V = |X_V><X_V| + |B><B|", ok,
                       "exact" if ok else "mismatch")


# -------------------------------------------------------------------- model


def check_stark_identities(st: StarkModel | None = None) -> CheckResult:
    st = st or StarkModel()
    vs = np.linspace(st.v_min, st.v_max, 201)
    ident = max(abs(st.e_b(v) - st.e_x(v) - st.e_xx(v)) for v in vs)
    anchor = abs(st.e_b(st.v_ref) - 2 * st.e_tpe)
    h = 1e-4
    fd = max(abs((st.e_b(v + h) - st.e_b(v - h)) / (2 * h) - st.slope_x(v)
                 - st.slope_xx(v)) for v in vs[1:-1])
    ok = ident <= 1e-9 and anchor <= 1e-9 and fd <= 1e-6
    return CheckResult("Stark identities", ok,
                       f"E_B-E_X-E_XX {ident:.1e}, anchor {anchor:.1e}, "
                       f"slope sum {fd:.1e} meV/V")


def check_hamiltonian_hermitian(n: int = 1000, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    m = DeviceModel()
    worst = 0.0
    for _ in range(n):
        v = rng.uniform(m.stark.v_min, m.stark.v_max)
        h = hamiltonian(m.at_bias(v), rng.uniform(0, 600), default_frame(m))
        worst = max(worst, float(np.max(np.abs(h - adjoint(h)))))
    return CheckResult("Hamiltonian Hermitian", worst == 0.0,
                       f"max |H - H^+| = {worst:.1e} over {n} samples")


def toy_lab_model() -> DeviceModel:
    """Few-meV level scheme whose lab-frame carriers RK4 can resolve."""
    st = StarkModel(v_ref=0.0, e_tpe=1.0, binding=0.2, v_min=-1.0,
                    v_max=1.0)
    return DeviceModel(st, 0.05, 0.0, DissipatorRates(),
                       PulseSpec(60.0, 10.0, 4.0, 1.0, "H"),
                       PulseSpec(40.0, 12.0, 4.0, 1.08, "V"))


def check_frame_equivalence() -> CheckResult:
    m = toy_lab_model()
    grid = TimeGrid(0.0, 20.0, 0.002)
    lab = propagate(m, ground_state(), grid, Frame.lab())
    rot = propagate(m, ground_state(), grid, Frame(m.tpe.energy))
    dev = float(np.max(np.abs(lab.populations() - rot.populations())))
    return CheckResult("lab vs rotating frame populations", dev <= 1e-6,
                       f"max deviation {dev:.2e} over 20 ps")


# --------------------------------------------------------------- propagator


def check_analytic_decay() -> CheckResult:
    m = undriven(p_incoh=0.0)
    frame = default_frame(m)
    x = propagate(m, dyad(Label.X_V, Label.X_V), TimeGrid(0, 100, 0.125),
                  frame).states[-1]
    b = propagate(m, dyad(Label.B, Label.B), TimeGrid(0, 50, 0.125),
                  frame).states[-1]
    want = np.exp(-2 * m.rates.gamma_rad / HBAR * 100)
    dx = abs(x[2, 2].real - want)
    db = abs(b[3, 3].real - want)
    return CheckResult("undriven X_V and B decay", max(dx, db) <= 1e-5,
                       f"X_V(100 ps) {x[2, 2].real:.6f}, B(50 ps) "
                       f"{b[3, 3].real:.6f}, analytic {want:.6f}")


def check_driven_physicality() -> CheckResult:
    m = DeviceModel()
    traj = propagate(m, ground_state(), TimeGrid(0, 600, 0.125),
                     default_frame(m))
    drift = float(np.max(np.abs(np.trace(traj.states, axis1=1, axis2=2)
                                - 1)))
    eig = float(min(np.linalg.eigvalsh(r)[0] for r in traj.states[::8]))
    ok = drift < 1e-8 and eig >= -1e-8
    return CheckResult("driven 600 ps run physical", ok,
                       f"trace drift {drift:.1e}, min eigenvalue {eig:.1e}")


def check_static_oracle() -> CheckResult:
    # The G-X_V coherence is carried in the frame of the X line; in the TPE
    # frame it turns by 1.5 rad per 0.5 ps step, beyond what RK4 resolves.
    m = undriven()
    psi = np.array([0.6, 0.0, 0.8, 0.0], dtype=complex)
    rho0 = 0.5 * np.outer(psi, psi.conj()) + 0.5 * np.diag([0, 0.2, 0, 0.8])
    grid = TimeGrid(0, 300, 0.5)
    frame = Frame(m.stark.e_x(m.bias))
    dev = max_frobenius_deviation(propagate(m, rho0, grid, frame),
                                  expm_oracle(m, rho0, grid, frame))
    return CheckResult("RK4 vs exact exponential, no drive", dev < 1e-6,
                       f"max Frobenius deviation {dev:.2e} at dt = 0.5 ps")


def oracle_comparison(m: DeviceModel | None = None, dt: float = 0.1,
                      horizon: float = 600.0, substeps: int = 20) -> dict:
    """RK4 at dt and 2*dt against a fine piecewise-exponential reference.

    The midpoint exponential is second order, so the reference runs on
    ``substeps`` sub-intervals per RK4 step to be far more accurate than
    the integrator it checks.
    """
    m = m or DeviceModel()
    frame = default_frame(m)
    rho0 = ground_state()
    ref = expm_oracle(m, rho0, TimeGrid(0, horizon, dt), frame, substeps)
    fine = propagate(m, rho0, TimeGrid(0, horizon, dt), frame)
    coarse = propagate(m, rho0, TimeGrid(0, horizon, 2 * dt), frame)
    end_fine = float(np.linalg.norm(fine.states[-1] - ref.states[-1]))
    end_coarse = float(np.linalg.norm(coarse.states[-1] - ref.states[-1]))
    return {"dt": dt, "horizon": horizon, "substeps": substeps,
            "max_dev": max_frobenius_deviation(fine, ref),
            "max_dev_coarse": max_frobenius_deviation(coarse, ref),
            "end_fine": end_fine, "end_coarse": end_coarse,
            "ratio": end_coarse / end_fine,
            "oracle_trace_dev": float(np.max(np.abs(
                np.trace(ref.states, axis1=1, axis2=2) - 1)))}


def check_oracle() -> list[CheckResult]:
    r = oracle_comparison()
    return [CheckResult("RK4 vs oracle, driven, dt = 0.1 ps",
                        r["max_dev"] < 1e-6,
                        f"max Frobenius deviation {r['max_dev']:.2e} "
                        f"(threshold 1e-6)"),
            CheckResult("RK4 convergence order", 8 <= r["ratio"] <= 32,
                        f"endpoint error ratio {r['ratio']:.2f} under step "
                        f"halving"),
            CheckResult("oracle trace preservation",
                        r["oracle_trace_dev"] < 1e-10,
                        f"trace deviation {r['oracle_trace_dev']:.1e}")]


# ----------------------------------------------------------------- spectrum


def check_correlation_bounds() -> CheckResult:
    m = DeviceModel()
    traj = propagate(m, ground_state(), TimeGrid(0, 300, 0.125),
                     default_frame(m))
    g = qrt_correlation(m, traj)
    pops = traj.populations()[: len(g.t)]
    d0 = float(np.max(np.abs(g.values[:, 0] - pops[:, 2] - pops[:, 3])))
    top = float(np.max(np.abs(g.values)))
    ok = d0 <= 1e-8 and top <= 1 + 1e-8
    return CheckResult("g(t,0) = rho_XV + rho_B and |g| <= 1", ok,
                       f"g(t,0) deviation {d0:.1e}, max |g| {top:.4f}")


def coherence_decay_rate(tau_max: float = 200.0, dt: float = 0.0625
                         ) -> tuple[float, float]:
    """Fitted decay rate of |g(0,tau)| for undriven X_V, and the expected one.

    The pump is off: it would also damp the X_V-G coherence.
    """
    m = undriven(p_incoh=0.0)
    traj = propagate(m, dyad(Label.X_V, Label.X_V), TimeGrid(0, tau_max, dt),
                     default_frame(m))
    g = qrt_correlation(m, traj, window_end=tau_max)
    sel = g.tau <= tau_max
    rate = -np.polyfit(g.tau[sel], np.log(np.abs(g.values[0, sel])), 1)[0]
    want = (m.rates.gamma_rad + 0.5 * m.rates.gamma_pure) / HBAR
    return float(rate), float(want)


def check_coherence_decay() -> CheckResult:
    rate, want = coherence_decay_rate()
    rel = abs(rate / want - 1)
    return CheckResult("coherence decay rate", rel <= 5e-3,
                       f"fitted {rate:.6f} /ps vs {want:.6f} /ps "
                       f"({rel:.1e} relative)")


def synthetic_spectrum_error(kappa: float = 0.02, line: float = 0.03,
                             window_end: float = 20.0, step: float = 0.01,
                             gamma: float = 4.0) -> float:
    """Largest relative bin error of filtered_spectrum on e^{-kappa tau -
    i w0 tau} against the closed-form double integral."""
    from .spectrum import CorrelationGrid
    frame = Frame(1000.0)
    t = np.arange(0.0, window_end + step / 2, step)
    tau = t.copy()
    w0 = line * 1e3 / HBAR
    vals = np.exp(-(kappa + 1j * w0) * tau)[None, :].repeat(len(t), 0)
    grid = CorrelationGrid(t, tau, vals, frame, window_end)
    energies = frame.energy + line + np.linspace(-0.1, 0.1, 41)
    s = filtered_spectrum(grid, FilterSpec(gamma, window_end), energies)
    exact = closed_form_spectrum(energies - frame.energy, kappa, w0,
                                 gamma / HBAR, window_end)
    return float(np.max(np.abs(s.intensity / exact - 1)))


def closed_form_spectrum(de: np.ndarray, kappa: float, w0: float, g: float,
                         T: float) -> np.ndarray:
    """Re int_0^T dt int_0^{T-t} dtau e^{-(kappa + i w0) tau} e^{i w tau}
    e^{-g/2 (T-t)} e^{-g/2 (T-t-tau)} for w = de/hbar."""
    w = np.asarray(de) * 1e3 / HBAR
    a = -kappa + 1j * (w - w0) + 0.5 * g
    val = ((np.exp((a - g) * T) - 1) / (a - g)
           - (1 - np.exp(-g * T)) / g) / a
    return val.real


def check_filter_oracle() -> CheckResult:
    err = synthetic_spectrum_error()
    return CheckResult("filtered spectrum vs closed form", err <= 1e-6,
                       f"max relative error {err:.1e}")


def check_dtau_convergence() -> CheckResult:
    m = DeviceModel()
    e = energy_axis(m.tpe.energy, 4.5)
    a = simulate_spectrum(m, e, dt=0.0625, dtau=0.0625).intensity
    b = simulate_spectrum(m, e, dt=0.0625, dtau=0.03125).intensity
    rel = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
    return CheckResult("delay-step halving 0.0625 -> 0.03125 ps", rel < 5e-3,
                       f"max change {rel:.1e} of the spectrum maximum")


def check_frame_independence() -> CheckResult:
    m = DeviceModel()
    e = energy_axis(m.tpe.energy, 4.5)
    # The residual difference is RK4 error and falls as dt^4; at the
    # 0.0625 ps default it sits just above 1e-4.
    a = simulate_spectrum(m, e, dt=0.05, frame=Frame(m.tpe.energy))
    b = simulate_spectrum(m, e, dt=0.05, frame=Frame(m.tpe.energy + 0.1))
    rel = float(np.max(np.abs(a.intensity - b.intensity))
                / np.max(np.abs(a.intensity)))
    return CheckResult("frame independence of the spectrum", rel <= 1e-4,
                       f"max difference {rel:.1e} of the spectrum maximum "
                       f"at dt = 0.05 ps")


def fwhm(energies: np.ndarray, s: np.ndarray) -> float:
    i = int(np.argmax(s))
    half = 0.5 * s[i]
    lo = i
    while lo > 0 and s[lo] > half:
        lo -= 1
    hi = i
    while hi < len(s) - 1 and s[hi] > half:
        hi += 1
    x_lo = np.interp(half, [s[lo], s[lo + 1]], energies[lo:lo + 2])
    x_hi = np.interp(half, [s[hi], s[hi - 1]], [energies[hi], energies[hi - 1]])
    return float(x_hi - x_lo)


def check_filter_broadening() -> CheckResult:
    # Lasers off, incoherent pump on: the X line is fed continuously. A
    # single decaying X_V population instead narrows with larger Gamma,
    # because the e^{+Gamma tau/2} factor offsets part of the tau decay.
    m = undriven()
    e_x = m.stark.e_x(m.bias)
    e = energy_axis(e_x, 0.1, 0.0005)
    widths = []
    for gamma in (2.0, 4.0, 8.0):
        s = simulate_spectrum(m, e, f=FilterSpec(gamma, 300.0))
        widths.append(fwhm(e, s.intensity) * 1e3)
    ok = widths[0] < widths[1] < widths[2]
    return CheckResult("filter broadening monotonic", ok,
                       "FWHM " + ", ".join(f"{w:.2f}" for w in widths)
                       + " ueV for hbar*Gamma = 2, 4, 8 ueV")


# -------------------------------------------------------------------- sweep


def sdc_track_deviations(smap, sc, tracks) -> list[tuple[float, float, float]]:
    """(V, deviation, tolerance) in meV for every SDC-labelled track point."""
    m = sc.config.model
    out = []
    for t in tracks:
        if t.label != "SDC":
            continue
        for v, e in zip(t.voltages, t.energies):
            mv = m.at_bias(float(v))
            tol = 2 * smap.bin_width + 0.5 * ac_stark_scale(mv) * 1e-3
            out.append((float(v), float(e - (m.stark.e_b(v)
                                              - sc.control_energy)), tol))
    return out


def slope_errors(tracks, m: DeviceModel) -> dict[str, float]:
    """Smallest relative slope error per label among the labelled tracks."""
    refs = {"X": m.stark.slope_x, "XX": m.stark.slope_xx,
            "SDC": m.stark.slope_b}
    out = {}
    for t in tracks:
        if t.label in refs:
            ref = refs[t.label](float(np.mean(t.voltages)))
            err = abs(t.slope / ref - 1)
            out[t.label] = min(err, out.get(t.label, np.inf))
    return out


def check_sweeps(workers: int = 1) -> list[CheckResult]:
    results = []
    partners = {}
    for name in ("fig5a", "fig5b"):
        t0 = time.perf_counter()
        sc = scenario(name)
        smap = run_sweep(sc.config, workers)
        tracks = classify_tracks(track_peaks(smap), sc.config.model,
                                 sc.control_energy)
        dt = time.perf_counter() - t0
        partners[name] = crossing_partner(tracks)[0]
        if name != "fig5a":
            continue
        devs = sdc_track_deviations(smap, sc, tracks)
        bad = [d for d in devs if abs(d[1]) > d[2]]
        results.append(CheckResult(
            "SDC energy conservation along the fig5a sweep",
            len(devs) >= 5 and not bad,
            f"{len(devs)} SDC points, {len(bad)} outside tolerance"
            + (f" (worst {max(abs(d[1]) for d in devs) * 1e3:.0f} ueV)"
               if devs else ""), dt))
        errs = slope_errors(tracks, sc.config.model)
        ok = all(errs.get(k, np.inf) <= 0.05 for k in ("X", "XX", "SDC"))
        results.append(CheckResult(
            "Stark slope fingerprint (5%)", ok,
            ", ".join(f"{k} {errs[k] * 100:.1f}%" if k in errs else
                      f"{k} missing" for k in ("X", "XX", "SDC"))))
    ok = partners == {"fig5a": "XX", "fig5b": "X"}
    results.append(CheckResult(
        "scenario duality of the avoided crossing", ok,
        f"SDC anticrosses {partners['fig5a']} (fig5a) and "
        f"{partners['fig5b']} (fig5b)"))
    return results


FAST_CHECKS = (check_dyad_algebra, check_dissipators, check_emission_identity,
               check_stark_identities, check_hamiltonian_hermitian,
               check_frame_equivalence, check_analytic_decay,
               check_driven_physicality, check_static_oracle,
               check_correlation_bounds, check_coherence_decay,
               check_filter_oracle, check_dtau_convergence,
               check_frame_independence, check_filter_broadening)


def run_all(quick: bool = False, workers: int = 1) -> list[CheckResult]:
    results = []
    for fn in FAST_CHECKS:
        t0 = time.perf_counter()
        r = fn()
        r.seconds = time.perf_counter() - t0
        results.append(r)
    if not quick:
        t0 = time.perf_counter()
        oracle = check_oracle()
        oracle[0].seconds = time.perf_counter() - t0
        results += oracle
        results += check_sweeps(workers)
    return results
