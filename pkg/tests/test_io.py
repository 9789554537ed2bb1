import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elab import io
from elab.grid import BoxSpec


@settings(max_examples=25, deadline=None)
@given(d=st.integers(1, 3), n=st.sampled_from([8, 16]), L=st.floats(0.5, 50), seed=st.integers(0, 2**31))
def test_field_roundtrip(d, n, L, seed):
    box = BoxSpec(d, L, n)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(box.shape) + 1j * rng.standard_normal(box.shape)
    data, b, k = io.decode_snapshot(io.encode_snapshot(f, box))
    assert np.array_equal(data, f) and b == box and k is None


def test_kernel_roundtrip(tmp_path):
    box = BoxSpec(1, 4.0, 8)
    g = np.arange(8**4, dtype=complex).reshape((8,) * 4) * (1 - 1j)
    p = io.write_snapshot(tmp_path / "g.ellf", g, box, k=2)
    data, b, k = io.read_snapshot(p)
    assert k == 2 and b == box and np.array_equal(data, g)


def test_header_layout():
    raw = io.encode_snapshot(np.zeros(8), BoxSpec(1, 2.0, 8))
    assert raw[:4] == b"ELLF"
    assert len(raw) == 4 + 4 * 3 + 8 + 16 * 8


def test_corrupt_files_rejected():
    box = BoxSpec(1, 2.0, 8)
    raw = io.encode_snapshot(np.ones(8), box)
    with pytest.raises(io.SnapshotError, match="magic"):
        io.decode_snapshot(b"XXXX" + raw[4:])
    with pytest.raises(io.SnapshotError, match="truncated"):
        io.decode_snapshot(raw[:10])
    with pytest.raises(io.SnapshotError, match="expected 8"):
        io.decode_snapshot(raw[:-16])
    with pytest.raises(io.SnapshotError, match="version"):
        io.decode_snapshot(raw[:4] + (7).to_bytes(4, "little") + raw[8:])
    with pytest.raises(io.SnapshotError, match="shape"):
        io.encode_snapshot(np.ones(16), box)


def test_trajectory_directory(tmp_path):
    box = BoxSpec(1, 2.0, 8)
    snaps = [np.full(8, i, dtype=complex) for i in range(3)]
    recs = [{"t": 0.1 * i} for i in range(3)]
    io.write_trajectory(tmp_path / "tr", box, snaps, recs, {"hbar": 0.5})
    back, r, h = io.read_trajectory(tmp_path / "tr")
    assert all(np.array_equal(a, b) for a, b in zip(back, snaps))
    assert r == recs and h == {"hbar": 0.5}


def row(hbar, N, **kw):
    base = {c: 0.0 for c in io.SWEEP_COLUMNS}
    base.update(hbar=hbar, N=N, beta=0.5, T=0.3, **kw)
    return base


def test_sweep_csv_is_sorted_crlf_and_exact(tmp_path):
    rows = [row(0.2, 1e6, M0=0.1), row(0.05, 1e6, M0=1 / 3), row(0.1, 1e6)]
    text = io.sweep_csv(rows)
    lines = text.split("\r\n")
    assert lines[0] == ",".join(io.SWEEP_COLUMNS)
    assert text.endswith("\r\n") and "\n" not in text.replace("\r\n", "")
    p = io.write_sweep(tmp_path / "s.csv", rows, {"pipeline": "sweep"})
    assert p.read_bytes() == text.encode()
    back = io.read_sweep(p)
    assert [r["hbar"] for r in back] == [0.05, 0.1, 0.2]
    assert back[0]["M0"] == 1 / 3
    assert p.with_suffix(".json").exists()


def test_sweep_order_independent_of_input_order():
    rows = [row(h, N) for h in (0.1, 0.2) for N in (16.0, 256.0)]
    assert io.sweep_csv(rows) == io.sweep_csv(rows[::-1])


def test_sweep_requires_all_columns():
    with pytest.raises(KeyError, match="Cstar"):
        io.sweep_csv([{c: 1.0 for c in io.SWEEP_COLUMNS if c != "Cstar"}])


def test_sweep_quotes_per_rfc(tmp_path):
    text = io.sweep_csv([row(0.1, 16.0)])
    parsed = list(csv.reader(text.splitlines()))
    assert len(parsed) == 2 and len(parsed[1]) == len(io.SWEEP_COLUMNS)


def test_json_handles_numpy(tmp_path):
    p = io.write_json(tmp_path / "a.json", {"x": np.float64(1.5), "v": np.arange(3)})
    assert p.read_text().replace(" ", "").replace("\n", "") == '{"v":[0,1,2],"x":1.5}'
    with pytest.raises(TypeError):
        io.write_json(tmp_path / "b.json", {"x": object()})


def test_gnuplot_script_names_columns():
    gp = io.gnuplot_script("s.csv", "hbar", ["err_density_L2"], io.SWEEP_COLUMNS, "sweep")
    assert "s.csv" in gp and "logscale" in gp
    assert "using 1:5" in gp
