import numpy as np
import pytest

from qdsdc import __version__
from qdsdc.config import RunConfig, serialize
from qdsdc.spectrum import Spectrum
from qdsdc.sweep import PeakTrack, SpectralMap
from qdsdc.writers import (fmt, heatmap_pixels, read_pgm, render_heatmap,
                           write_map, write_spectrum, write_tracks)


def small_map(intensity=None):
    e = np.array([1340.0, 1340.005, 1340.01])
    v = np.array([0.1, 0.2])
    if intensity is None:
        intensity = np.arange(6.0).reshape(3, 2) / 7
    return SpectralMap(v, e, intensity, [{"V": 0.1}, {"V": 0.2}])


def data_lines(path):
    return [ln for ln in path.read_text().splitlines()
            if not ln.startswith("#")]


def test_two_by_three_map_layout(tmp_path):
    tsv, meta = write_map(small_map(), tmp_path / "m.tsv", "abc")
    rows = data_lines(tsv)
    assert len(rows) == 3
    assert all(len(r.split("\t")) == 2 for r in rows)
    axes = [ln for ln in tsv.read_text().splitlines()
            if ln.startswith(("# voltage_V", "# energy_meV"))]
    assert axes == ["# voltage_V\t0.1\t0.2",
                    "# energy_meV\t1340\t1340.005\t1340.01"]
    text = tsv.read_text()
    assert f"# tool_version\t{__version__}" in text
    assert "# config_hash\tabc" in text
    assert meta.name == "m.meta.txt"


def test_numbers_have_nine_significant_digits():
    assert fmt(1 / 3) == "0.333333333"
    assert fmt(1341.1712345678) == "1341.17123"
    assert fmt(-0.0) == "0"
    assert fmt(2.5e-12) == "2.5e-12"


def test_same_map_twice_is_byte_identical(tmp_path):
    a, ma = write_map(small_map(), tmp_path / "a.tsv", "h", "p = 1")
    b, mb = write_map(small_map(), tmp_path / "b.tsv", "h", "p = 1")
    assert a.read_bytes() == b.read_bytes()
    assert ma.read_bytes() == mb.read_bytes()
    assert b"\r" not in a.read_bytes()
    assert a.read_bytes().endswith(b"\n")


def test_config_hash_changes_with_any_parameter(tmp_path):
    cfg = RunConfig()
    other = cfg.with_value("rates", "gamma_pure", 4.5)
    a, _ = write_map(small_map(), tmp_path / "a.tsv", cfg.hash())
    b, _ = write_map(small_map(), tmp_path / "b.tsv", other.hash())
    assert a.read_bytes() != b.read_bytes()
    assert data_lines(a) == data_lines(b)


def test_sidecar_lists_parameters_and_diagnostics(tmp_path):
    smap = small_map()
    smap.diagnostics.append("column 1 failed")
    smap.masked_bands.append((1339.6, 1340.4))
    params = serialize(RunConfig())
    _, meta = write_map(smap, tmp_path / "m.tsv", "h", params)
    text = meta.read_text()
    assert "sigma = 100.0 ps" in text
    assert "column 1 failed" in text
    assert "1339.6\t1340.4" in text


def test_uniform_map_is_white():
    pix = heatmap_pixels(small_map(np.full((3, 2), 2.0)), gamma=1.0)
    assert np.all(pix == 65535)


def test_single_hot_bin(tmp_path):
    img = np.zeros((3, 2))
    img[0, 1] = 5.0
    path = render_heatmap(small_map(img), tmp_path / "h.pgm", gamma=1.0)
    pix = read_pgm(path)
    assert np.count_nonzero(pix == 65535) == 1
    assert np.count_nonzero(pix) == 1
    assert pix[2, 1] == 65535  # lowest energy is the bottom row


def test_pgm_header_and_size(tmp_path):
    path = render_heatmap(small_map(), tmp_path / "h.pgm", gamma=0.5)
    data = path.read_bytes()
    assert data.startswith(b"P5\n#")
    lines = data.split(b"\n")
    assert lines[2] == b"2 3" and lines[3] == b"65535"
    assert len(data) == len(b"\n".join(lines[:4])) + 1 + 2 * 2 * 3
    assert read_pgm(path).shape == (3, 2)


def test_gamma_and_negative_clipping():
    img = np.array([[0.25, -1.0], [1.0, 0.0], [0.0, 0.0]])
    pix = heatmap_pixels(small_map(img), gamma=0.5)
    # pixel rows run from the highest energy (map row 2) down to row 0
    assert pix[1, 0] == 65535
    assert pix[2, 0] == 32768  # sqrt(0.25) * 65535, rounded
    assert pix[2, 1] == 0
    with pytest.raises(ValueError):
        heatmap_pixels(small_map(img), 0.0)


def test_zero_map_renders_black():
    assert not np.any(heatmap_pixels(small_map(np.zeros((3, 2)))))


def test_spectrum_and_track_writers(tmp_path):
    s = Spectrum(np.array([1.0, 2.0]), np.array([0.5, -0.0]))
    p = write_spectrum(s, tmp_path / "s.tsv", "h", ["bias_V\t0.2"])
    assert data_lines(p) == ["1\t0.5", "2\t0"]
    assert "# bias_V\t0.2" in p.read_text()
    t = PeakTrack(np.array([0.1, 0.2]), np.array([1340.0, 1339.9]),
                  np.array([1.0, 0.9]), "XX", -1.0, 1340.1, 0.0)
    p = write_tracks([t], tmp_path / "t.tsv", "h")
    assert data_lines(p) == ["0\tXX\t0.1\t1340\t1", "0\tXX\t0.2\t1339.9\t0.9"]
    assert "# 0\tXX\t-1\t1340.1\t0\t2" in p.read_text()
