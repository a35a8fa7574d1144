"""Bias-voltage sweeps, spectral maps and the line analysis run on them.

A sweep evaluates the single-bias pipeline (propagate, correlate, filter)
once per voltage and stacks the spectra as columns of an energy x voltage
map. Columns are independent, so they are farmed out to a process pool and
gathered back in configuration order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks
from threadpoolctl import threadpool_limits

from .model import DeviceModel
from .spectrum import FilterSpec, energy_axis, simulate_spectrum

log = logging.getLogger(__name__)

LABELS = ("X", "XX", "SDC", "UNKNOWN")


@dataclass(frozen=True)
class SweepConfig:
    voltages: tuple[float, ...]
    model: DeviceModel
    energies: np.ndarray = field(
        default_factory=lambda: energy_axis(1341.17, 4.5))
    dt: float = 0.0625  # ps, outer time step
    dtau: float = 0.0625  # ps, delay step
    filter: FilterSpec = field(default_factory=FilterSpec)
    control_energies: tuple[float, ...] | None = None  # per-voltage override
    rho0: np.ndarray | None = None
    notch_centers: tuple[float, ...] = ()
    notch_half_width: float = 0.4  # meV

    def __post_init__(self):
        v = np.asarray(self.voltages, dtype=float)
        if v.size < 2:
            raise ValueError("a sweep needs at least two voltages")
        if np.any(np.diff(v) <= 0):
            raise ValueError("sweep voltages must be strictly increasing")
        for p in self.model.pulses:
            if p.energy <= 0:
                raise ValueError("laser energies must be positive")
        if self.control_energies is not None:
            if len(self.control_energies) != v.size:
                raise ValueError("need one control energy per voltage")
            if min(self.control_energies) <= 0:
                raise ValueError("laser energies must be positive")
        if self.notch_half_width < 0:
            raise ValueError("notch half-width must be non-negative")
        for v_b in v:
            self.model.stark._check(float(v_b))

    def model_at(self, i: int) -> DeviceModel:
        m = self.model.at_bias(float(self.voltages[i]))
        if self.control_energies is not None:
            m = replace(m, control=replace(m.control,
                                           energy=self.control_energies[i]))
        return m


@dataclass
class SpectralMap:
    """Intensity on an (energy, voltage) grid; column j belongs to voltages[j]."""

    voltages: np.ndarray
    energies: np.ndarray
    intensity: np.ndarray  # (n_energies, n_voltages)
    metadata: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    masked_bands: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        shape = (len(self.energies), len(self.voltages))
        if self.intensity.shape != shape:
            raise ValueError(f"intensity shape {self.intensity.shape} does not "
                             f"match axes {shape}")
        if not np.all(np.isfinite(self.intensity)):
            raise ValueError("intensities must be finite")

    @property
    def bin_width(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def complete(self) -> bool:
        return not self.diagnostics

    def column(self, voltage: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.voltages - voltage)))
        return self.intensity[:, j]


def _spectrum_job(m: DeviceModel, energies, dt, dtau, f, rho0, what: str
                  ) -> tuple[np.ndarray, str | None]:
    """One spectrum, or zeros and a message on any failure."""
    try:
        # Single-threaded BLAS keeps every reduction in the same order no
        # matter which process computes the spectrum.
        with threadpool_limits(limits=1):
            s = simulate_spectrum(m, energies, dt=dt, dtau=dtau, f=f,
                                  rho0=rho0)
        if not np.all(np.isfinite(s.intensity)):
            raise FloatingPointError("non-finite spectrum")
        return s.intensity, None
    except Exception as exc:  # recorded per column, the sweep carries on
        log.warning("%s failed: %s", what, exc)
        return (np.zeros(len(energies)),
                f"{what} failed: {type(exc).__name__}: {exc}")


def _column(cfg: SweepConfig, i: int) -> tuple[np.ndarray, str | None]:
    what = f"column {i} (V = {float(cfg.voltages[i]):+.4f} V)"
    try:
        m = cfg.model_at(i)
    except Exception as exc:
        return (np.zeros(len(cfg.energies)),
                f"{what} failed: {type(exc).__name__}: {exc}")
    return _spectrum_job(m, cfg.energies, cfg.dt, cfg.dtau, cfg.filter,
                         cfg.rho0, what)


def _column_job(args):
    return _column(*args)


def _scan_job(args):
    return _spectrum_job(*args)


def _gather(fn, jobs, workers: int) -> list:
    """Map ``fn`` over ``jobs`` in order, in-process or on a process pool."""
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def control_scan(m: DeviceModel, control_energies, energies,
                 workers: int = 1, dt: float = 0.0625, dtau: float = 0.0625,
                 f: FilterSpec | None = None
                 ) -> tuple[np.ndarray, list[str]]:
    """Spectra at fixed bias for several control photon energies.

    Returns an (n_energies, n_controls) array and the failure messages.
    """
    f = f or FilterSpec(window_end=m.control.center)
    jobs = [(replace(m, control=replace(m.control, energy=float(e))),
             energies, dt, dtau, f, None, f"control {float(e):.4f} meV")
            for e in control_energies]
    results = _gather(_scan_job, jobs, workers)
    return (np.column_stack([r[0] for r in results]),
            [r[1] for r in results if r[1] is not None])


def column_metadata(cfg: SweepConfig, i: int) -> dict:
    m = cfg.model_at(i)
    v = float(cfg.voltages[i])
    return {"V": v, "E_X": m.stark.e_x(v), "E_XX": m.stark.e_xx(v),
            "E_B": m.stark.e_b(v), "E_tpe": m.tpe.energy,
            "E_c": m.control.energy}


def run_sweep(cfg: SweepConfig, workers: int = 1) -> SpectralMap:
    """Compute every column; failed columns become zeros plus a diagnostic."""
    n = len(cfg.voltages)
    results = _gather(_column_job, [(cfg, i) for i in range(n)], workers)
    intensity = np.column_stack([r[0] for r in results])
    diagnostics = [r[1] for r in results if r[1] is not None]
    if diagnostics:
        diagnostics.append(f"partial map: {len(diagnostics)} of {n} columns "
                           f"failed")
    smap = SpectralMap(np.asarray(cfg.voltages, dtype=float),
                       np.asarray(cfg.energies, dtype=float), intensity,
                       [column_metadata(cfg, i) for i in range(n)],
                       diagnostics)
    if cfg.notch_centers:
        smap = apply_notch_mask(smap, cfg.notch_centers, cfg.notch_half_width)
    return smap


def apply_notch_mask(smap: SpectralMap, centers, half_width: float
                     ) -> SpectralMap:
    """Zero the bins within +-half_width of each center (a new map)."""
    intensity = smap.intensity.copy()
    bands = list(smap.masked_bands)
    if half_width > 0:
        for c in centers:
            lo, hi = c - half_width, c + half_width
            intensity[(smap.energies >= lo) & (smap.energies <= hi)] = 0.0
            bands.append((float(lo), float(hi)))
    return replace(smap, intensity=intensity, masked_bands=bands)


# ---------------------------------------------------------------- tracking


@dataclass
class PeakTrack:
    voltages: np.ndarray
    energies: np.ndarray
    intensities: np.ndarray
    label: str = "UNKNOWN"
    slope: float = np.nan  # meV/V
    intercept: float = np.nan  # meV at V = 0
    residual: float = np.nan  # rms, meV

    def __post_init__(self):
        if np.any(np.diff(self.voltages) <= 0):
            raise ValueError("track voltages must be strictly increasing")

    def __len__(self) -> int:
        return len(self.voltages)

    def energy_at(self, v: float) -> float:
        return float(np.interp(v, self.voltages, self.energies))

    @property
    def mean_energy(self) -> float:
        return float(np.mean(self.energies))


def fit_line(v: np.ndarray, e: np.ndarray) -> tuple[float, float, float]:
    """Least-squares slope, intercept and rms residual."""
    if len(v) < 2:
        return np.nan, float(e[0]) if len(e) else np.nan, np.nan
    slope, intercept = np.polyfit(v, e, 1)
    res = e - (slope * v + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(res ** 2)))


def column_peaks(energies: np.ndarray, s: np.ndarray, prominence: float
                 ) -> list[tuple[float, float]]:
    """Local maxima standing out by ``prominence`` x column max, as
    (energy, height).

    Both the height and the topographic prominence (drop to the higher of
    the two bounding minima) must reach the threshold, so ripples riding on
    the flank of a strong line are not peaks. A flat top counts once, at its
    middle bin; two separate maxima of equal height are both kept. The
    energy is refined by a parabola through the maximum and its neighbours.
    """
    top = s.max() if s.size else 0.0
    if top <= 0:
        return []
    idx, _ = find_peaks(s, height=prominence * top,
                        prominence=prominence * top)
    de = energies[1] - energies[0]
    peaks = []
    for i in idx:
        a, b, c = s[i - 1], s[i], s[i + 1]
        curv = a - 2 * b + c
        shift = 0.5 * (a - c) / curv if curv < 0 else 0.0
        peaks.append((float(energies[i] + shift * de), float(b)))
    return peaks


def track_peaks(smap: SpectralMap, prominence: float = 0.05,
                max_jump: float = 0.1, min_length: int = 3) -> list[PeakTrack]:
    """Link column maxima into lines and fit each with a straight line.

    Association is greedy by energy distance: across each voltage step,
    all (open track, candidate peak) pairs closer than ``max_jump`` are
    matched shortest first, each track and each peak at most once. Peaks left
    over start new tracks; tracks left over end. Tracks shorter than
    ``min_length`` columns are dropped.
    """
    open_tracks: list[list[tuple[float, float, float]]] = []
    done: list[list[tuple[float, float, float]]] = []
    for j, v in enumerate(smap.voltages):
        peaks = column_peaks(smap.energies, smap.intensity[:, j], prominence)
        pairs = sorted((abs(t[-1][1] - e), k, p)
                       for k, t in enumerate(open_tracks)
                       for p, (e, _) in enumerate(peaks)
                       if abs(t[-1][1] - e) <= max_jump)
        used_t, used_p = set(), set()
        for _, k, p in pairs:
            if k in used_t or p in used_p:
                continue
            used_t.add(k)
            used_p.add(p)
            open_tracks[k].append((float(v),) + peaks[p])
        still_open = []
        for k, t in enumerate(open_tracks):
            (still_open if k in used_t else done).append(t)
        still_open += [[(float(v),) + peaks[p]] for p in range(len(peaks))
                       if p not in used_p]
        open_tracks = still_open
    done += open_tracks
    tracks = []
    for t in done:
        if len(t) < min_length:
            continue
        v, e, s = (np.array(x) for x in zip(*t))
        slope, icpt, res = fit_line(v, e)
        tracks.append(PeakTrack(v, e, s, slope=slope, intercept=icpt,
                                residual=res))
    tracks.sort(key=lambda tr: (tr.voltages[0], tr.energies[0]))
    return tracks


def reference_lines(m: DeviceModel, e_c: float | None = None) -> dict:
    """Label -> (energy(V), slope(V)) predicted by the Stark model."""
    st = m.stark
    refs = {"X": (st.e_x, st.slope_x), "XX": (st.e_xx, st.slope_xx)}
    if e_c is not None:
        refs["SDC"] = (lambda v: st.e_b(v) - e_c, st.slope_b)
    return refs


def classify_tracks(tracks: list[PeakTrack], m: DeviceModel,
                    e_c: float | None = None, rel_tol: float = 0.15,
                    energy_tol: float = 0.3) -> list[PeakTrack]:
    """Label tracks X, XX, SDC or UNKNOWN.

    A reference line is a candidate when the fitted slope lies within
    ``rel_tol`` of its Stark slope (at the track's mean voltage) and the
    track stays within ``energy_tol`` meV of its predicted energy on
    average. The closest candidate in energy wins. SDC is only considered
    when the control energy ``e_c`` is given.
    """
    refs = reference_lines(m, e_c)
    out = []
    for t in tracks:
        v_mid = float(np.mean(t.voltages))
        best, best_dev = "UNKNOWN", np.inf
        for name, (energy, slope) in refs.items():
            ref_slope = slope(v_mid)
            if not abs(t.slope - ref_slope) <= rel_tol * abs(ref_slope):
                continue
            dev = float(np.mean(np.abs(
                t.energies - np.array([energy(v) for v in t.voltages]))))
            if dev <= energy_tol and dev < best_dev:
                best, best_dev = name, dev
        out.append(replace(t, label=best))
    return out


def avoided_crossing_gap(ta: PeakTrack, tb: PeakTrack,
                         min_overlap: int = 3) -> tuple[float, float]:
    """Closest approach of two tracks over their shared voltages.

    Returns (gap in meV, voltage). Between samples the energy difference is
    interpolated linearly in V, so tracks that actually cross give a zero
    gap at the interpolated crossing point.
    """
    shared = np.intersect1d(np.round(ta.voltages, 9), np.round(tb.voltages, 9))
    if shared.size < min_overlap:
        raise ValueError(f"tracks share {shared.size} voltages, need at least "
                         f"{min_overlap}")
    d = np.array([ta.energy_at(v) - tb.energy_at(v) for v in shared])
    k = int(np.argmin(np.abs(d)))
    gap, where = abs(float(d[k])), float(shared[k])
    for i in range(len(d) - 1):
        if d[i] * d[i + 1] < 0:
            x = shared[i] + (shared[i + 1] - shared[i]) * d[i] / (d[i] - d[i + 1])
            return 0.0, float(x)
    return gap, where


def line_splitting(smap: SpectralMap, voltage: float, e_line: float,
                   window: float = 0.3, prominence: float = 0.05
                   ) -> tuple[float, float, float]:
    """Dressed splitting of one line in the column nearest ``voltage``.

    Returns (gap, lower, upper): the outermost peaks within
    +-window of ``e_line``. Under a pulsed drive the dressed doublet sweeps
    outward as the Rabi energy grows, so the outermost pair marks the
    splitting at the pulse peak. NaN when fewer than two maxima are found.
    """
    j = int(np.argmin(np.abs(smap.voltages - voltage)))
    s = smap.intensity[:, j]
    inside = np.abs(smap.energies - e_line) <= window
    if not np.any(s[inside] > 0):
        return np.nan, np.nan, np.nan
    peaks = [e for e, _ in column_peaks(smap.energies[inside], s[inside],
                                        prominence)]
    if len(peaks) < 2:
        return np.nan, np.nan, np.nan
    return max(peaks) - min(peaks), min(peaks), max(peaks)


def branch_gap(tracks: list[PeakTrack], voltage: float, e_line: float,
               window: float = 0.3) -> tuple[float, float]:
    """Avoided-crossing gap between the two branches of one line.

    Picks the two most intense tracks passing within ``window`` of
    ``e_line`` at ``voltage`` and returns their closest approach as
    (gap, voltage). NaN if fewer than two such tracks overlap enough.
    """
    near = []
    for t in tracks:
        if not t.voltages[0] <= voltage <= t.voltages[-1]:
            continue
        if abs(t.energy_at(voltage) - e_line) <= window:
            near.append((float(np.interp(voltage, t.voltages, t.intensities)),
                         id(t), t))
    near.sort(key=lambda x: -x[0])
    if len(near) < 2:
        return np.nan, np.nan
    try:
        return avoided_crossing_gap(near[0][2], near[1][2])
    except ValueError:
        return np.nan, np.nan


def crossing_partner(tracks: list[PeakTrack], probe: str = "SDC"
                     ) -> tuple[str | None, float]:
    """Label of the track the ``probe``-labelled tracks come closest to.

    Only pairs sharing at least three voltages are compared. Returns
    (label, gap) or (None, nan) when no pair qualifies.
    """
    best, best_gap = None, np.inf
    for a in tracks:
        if a.label != probe:
            continue
        for b in tracks:
            if b is a or b.label in (probe, "UNKNOWN"):
                continue
            try:
                gap, _ = avoided_crossing_gap(a, b)
            except ValueError:
                continue
            if gap < best_gap:
                best, best_gap = b.label, gap
    return (best, best_gap) if best is not None else (None, np.nan)


# ---------------------------------------------------------------- scenarios


SCENARIOS = ("fig5a", "fig5b", "fig3")


@dataclass(frozen=True)
class Scenario:
    """A named sweep: control placement, resonance voltage and voltage axis."""

    name: str
    config: SweepConfig
    resonance_bias: float  # V at which the dressed-state crossing occurs
    control_energy: float | None  # meV, None when the control is off
    crossing: tuple[str, ...]  # track labels expected to anticross, if known


def scenario(name: str, model: DeviceModel | None = None,
             v_res: float = 0.2, n_voltages: int = 25,
             span: tuple[float, float] | None = None, **grid) -> Scenario:
    """Build the fig5a, fig5b or fig3 sweep for ``model``.

    fig5a puts the control on the X line at ``v_res`` (blue of the TPE
    laser); fig5b puts it on the XX line at ``v_res`` (red of the TPE
    laser); fig3 switches the control off and sweeps through the two-photon
    resonance at the Stark anchor. ``span`` = (below, above) sets the
    voltage axis relative to the resonance. The fig5 default reaches much
    further above the resonance than below it: far from the crossing the
    lines are clean, while below it the sweep would run into the two-photon
    resonance.
    """
    m = model or DeviceModel()
    st = m.stark
    if name == "fig5a":
        e_c = st.e_x(v_res)
        crossing = ("SDC", "XX")
    elif name == "fig5b":
        e_c = st.e_xx(v_res)
        crossing = ("SDC", "X")
    elif name == "fig3":
        e_c, v_res = None, st.v_ref
        crossing = ("X", "XX")
    else:
        raise ValueError(f"unknown scenario {name!r}; pick one of {SCENARIOS}")
    if span is None:
        span = (0.12, 0.12) if name == "fig3" else (0.12, 0.84)
    if e_c is None:
        control = replace(m.control, amplitude=0.0)
    else:
        control = replace(m.control, energy=e_c)
    m = replace(m, control=control, bias=v_res)
    voltages = tuple(float(v) for v in np.round(
        np.linspace(v_res - span[0], v_res + span[1], n_voltages), 9))
    grid.setdefault("energies", energy_axis(m.tpe.energy, 4.5))
    grid.setdefault("filter", FilterSpec(window_end=m.control.center))
    cfg = SweepConfig(voltages, m, **grid)
    return Scenario(name, cfg, v_res, e_c, crossing)
