"""Deterministic text and image outputs.

All writers use LF newlines and format numbers with 9 significant digits,
so identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import __version__
from .spectrum import Spectrum
from .sweep import PeakTrack, SpectralMap


def fmt(x: float) -> str:
    return f"{float(x) + 0.0:.9g}"  # + 0.0 folds -0 into 0


def _row(values) -> str:
    return "\t".join(fmt(v) for v in values)


def _write(path: Path, lines: list[str]) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _preamble(kind: str, config_hash: str) -> list[str]:
    return [f"# qdsdc {kind}", f"# tool_version\t{__version__}",
            f"# config_hash\t{config_hash}"]


def write_map(smap: SpectralMap, path, config_hash: str,
              parameters: str = "") -> tuple[Path, Path]:
    """TSV matrix (rows: energy, columns: voltage) plus a metadata sidecar.

    The two axis header lines ``# voltage_V`` and ``# energy_meV`` list the
    column and row coordinates. Returns (tsv path, sidecar path).
    """
    path = Path(path)
    lines = _preamble("spectral map", config_hash)
    lines += ["# intensity\tarbitrary units; rows follow energy_meV, "
              "columns follow voltage_V",
              "# voltage_V\t" + _row(smap.voltages),
              "# energy_meV\t" + _row(smap.energies)]
    lines += [_row(r) for r in smap.intensity]
    _write(path, lines)
    return path, write_metadata(smap, path, config_hash, parameters)


def write_metadata(smap: SpectralMap, tsv_path, config_hash: str,
                   parameters: str) -> Path:
    side = Path(tsv_path).with_suffix(".meta.txt")
    lines = _preamble("run metadata", config_hash)
    lines += ["", "## resolved parameters", parameters.rstrip("\n"), "",
              "## columns"]
    if smap.metadata:
        keys = list(smap.metadata[0])
        lines.append("# " + "\t".join(keys))
        lines += [_row(md[k] for k in keys) for md in smap.metadata]
    lines += ["", "## masked bands (meV)"]
    lines += [_row(b) for b in smap.masked_bands] or ["none"]
    lines += ["", "## diagnostics"]
    lines += list(smap.diagnostics) or ["none"]
    _write(side, lines)
    return side


def write_spectrum(s: Spectrum, path, config_hash: str,
                   header: list[str] = ()) -> Path:
    lines = _preamble("spectrum", config_hash) + [f"# {h}" for h in header]
    lines.append("# energy_meV\tintensity")
    lines += [_row(r) for r in zip(s.energies, s.intensity)]
    _write(Path(path), lines)
    return Path(path)


def write_tracks(tracks: list[PeakTrack], path, config_hash: str) -> Path:
    """One line per track point, preceded by one header line per track fit."""
    lines = _preamble("peak tracks", config_hash)
    lines.append("# track\tlabel\tslope_meV_per_V\tintercept_meV\t"
                 "rms_residual_meV\tpoints")
    for k, t in enumerate(tracks):
        lines.append(f"# {k}\t{t.label}\t{fmt(t.slope)}\t{fmt(t.intercept)}"
                     f"\t{fmt(t.residual)}\t{len(t)}")
    lines.append("# track\tlabel\tvoltage_V\tenergy_meV\tintensity")
    for k, t in enumerate(tracks):
        for v, e, i in zip(t.voltages, t.energies, t.intensities):
            lines.append(f"{k}\t{t.label}\t{_row((v, e, i))}")
    _write(Path(path), lines)
    return Path(path)


def heatmap_pixels(smap: SpectralMap, gamma: float = 1.0) -> np.ndarray:
    """16-bit pixel array: row 0 is the highest energy, column 0 the lowest
    voltage. Intensities are clipped at zero, scaled to the map maximum
    and raised to ``gamma``."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    img = np.clip(smap.intensity[::-1, :], 0.0, None)
    top = img.max() if img.size else 0.0
    if top <= 0:
        return np.zeros(img.shape, dtype=np.uint16)
    return np.rint(65535.0 * (img / top) ** gamma).astype(np.uint16)


def render_heatmap(smap: SpectralMap, path, gamma: float = 1.0) -> Path:
    """Binary 16-bit PGM (P5, maxval 65535, big-endian samples)."""
    pix = heatmap_pixels(smap, gamma)
    h, w = pix.shape
    header = (f"P5\n# qdsdc heatmap: x = bias voltage increasing left to "
              f"right, y = photon energy decreasing top to bottom, "
              f"gamma {fmt(gamma)}\n{w} {h}\n65535\n")
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(pix.astype(">u2").tobytes())
    return Path(path)


def read_pgm(path) -> np.ndarray:
    """Read back a 16-bit P5 file written by ``render_heatmap``."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), \
        int(fields[3])
    if magic != b"P5" or maxval != 65535:
        raise ValueError("not a 16-bit P5 graymap")
    return np.frombuffer(data[pos:pos + 2 * w * h], dtype=">u2").reshape(h, w)
