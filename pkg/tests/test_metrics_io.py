import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import lattice, smooth_modes
from mrom import archive as ar
from mrom.cases import tgv_analytic
from mrom.domain import Geometry
from mrom.errors import FormatError
from mrom.metrics import FieldComparison, extract_slice, field_values, relative_discrepancy
from mrom.reference import ReferenceSpace, TrialBasis
from mrom.spline import build_spline_basis, eval_basis

PERIODIC = Geometry((0.0, 1.0, 0.0, 1.0), periodic=(True, True))

finite = st.floats(-1e3, 1e3, allow_nan=False)
fields = arrays(np.float64, st.integers(2, 40), elements=finite).filter(lambda a: np.ptp(a) > 1e-3)


# discrepancy

def test_discrepancy_identical_is_zero():
    assert relative_discrepancy([1.0, 3.0, 2.0], [1.0, 3.0, 2.0]) == 0.0


def test_discrepancy_arithmetic():
    assert relative_discrepancy([0.0, 1.0], [0.1, 0.9]) == pytest.approx(0.10, abs=1e-15)


@given(fields, st.floats(-10, 10))
def test_discrepancy_offset(a, c):
    assert relative_discrepancy(a, a + c) == pytest.approx(abs(c) / np.ptp(a), rel=1e-9, abs=1e-12)


@given(fields, st.floats(1e-3, 1e3), st.data())
def test_discrepancy_joint_scale_invariant(a, s, data):
    b = data.draw(arrays(np.float64, a.shape, elements=finite))
    assert relative_discrepancy(s * a, s * b) == pytest.approx(relative_discrepancy(a, b), rel=1e-9)


@given(fields, st.data())
def test_discrepancy_nonnegative_and_translation_covariant(a, data):
    b = data.draw(arrays(np.float64, a.shape, elements=finite))
    c = data.draw(st.floats(-100, 100))
    d = relative_discrepancy(a, b)
    assert d >= 0
    assert relative_discrepancy(a + c, b + c) == pytest.approx(d, rel=1e-6, abs=1e-9)


def test_discrepancy_errors():
    with pytest.raises(ValueError, match="zero range"):
        relative_discrepancy([2.0, 2.0], [1.0, 3.0])
    with pytest.raises(ValueError, match="lengths"):
        relative_discrepancy([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        relative_discrepancy([], [])


def test_field_values():
    rho = np.array([1000.0, 1001.0])
    u = np.array([[3.0, 4.0], [0.0, 0.0]])
    assert np.array_equal(field_values("velocity_norm", rho, u, 1000.0, 10.0), [5.0, 0.0])
    assert np.array_equal(field_values("pressure", rho, u, 1000.0, 10.0), [0.0, 100.0])
    assert np.array_equal(field_values("density", rho, u, 1000.0, 10.0), rho)
    with pytest.raises(ValueError):
        field_values("vorticity", rho, u, 1000.0, 10.0)


def test_field_comparison_validation():
    fc = FieldComparison([0.0, 0.1], [0.02, 0.05], "pressure")
    assert fc.peak == 0.05
    with pytest.raises(ValueError):
        FieldComparison([0.0], [0.1, 0.2], "pressure")


# slices

def test_constant_field_slice():
    x, dx = lattice(20)
    out = extract_slice(x, np.full(len(x), 7.5), PERIODIC, 2 * dx, 0, 0.5, 13, dx=dx)
    assert out.shape == (13, 2)
    assert np.allclose(out[:, 1], 7.5, rtol=0, atol=1e-12)
    assert np.all(np.diff(out[:, 0]) > 0)


@pytest.mark.parametrize("P", [1, 7, 50])
def test_slice_probe_count(P):
    x, dx = lattice(10)
    assert extract_slice(x, x[:, 0], PERIODIC, 2 * dx, 1, 0.3, P, dx=dx).shape == (P, 2)


def test_tgv_centreline_slice():
    x, dx = lattice(50)
    ux, _, _ = tgv_analytic(x[:, 0], x[:, 1], 0.0, 0.01)
    out = extract_slice(x, ux, PERIODIC, 4 * dx, 0, 0.25, 40, dx=dx)
    # Shepard smoothing over the band damps the peak slightly
    assert np.max(np.abs(out[:, 1] - np.cos(2 * np.pi * out[:, 0]))) <= 0.05


def test_slice_band_errors():
    x = np.array([[0.1, 0.1], [0.1, 0.9]])
    with pytest.raises(ValueError, match="no particles"):
        extract_slice(x, np.ones(2), PERIODIC, 0.05, 0, 0.5, 5, dx=0.01)
    with pytest.raises(ValueError, match="without donors"):
        extract_slice(x, np.ones(2), PERIODIC, 0.05, 0, 0.1, 20, dx=0.01)
    with pytest.raises(ValueError, match="band or dx"):
        extract_slice(x, np.ones(2), PERIODIC, 0.05, 0, 0.1, 20)


# archives

def make_archive(rng, N=12, n_s=4, trailer=True):
    return ar.SnapshotArchive(
        rng.random((N, 2)), rng.normal(size=(3 * N, n_s)), 0.05, 0.1,
        np.linspace(0, 1, n_s) if trailer else None,
        rng.random((n_s, N, 2)) if trailer else None,
    )


@pytest.mark.parametrize("trailer", [True, False])
def test_archive_round_trip(tmp_path, rng, trailer):
    a = make_archive(rng, trailer=trailer)
    path = tmp_path / "a.mrom"
    ar.write_snapshots(path, a)
    b = ar.read_snapshots(path)
    assert np.array_equal(a.x_G, b.x_G) and np.array_equal(a.S, b.S)
    assert (a.dx, a.h) == (b.dx, b.h)
    if trailer:
        assert np.array_equal(a.times, b.times) and np.array_equal(a.positions, b.positions)
    else:
        assert b.times is None and b.positions is None
    ar.write_snapshots(tmp_path / "b.mrom", b)
    assert path.read_bytes() == (tmp_path / "b.mrom").read_bytes()


def test_archive_header_layout(tmp_path, rng):
    a = make_archive(rng, N=5, n_s=3, trailer=False)
    ar.write_snapshots(tmp_path / "a.mrom", a)
    raw = (tmp_path / "a.mrom").read_bytes()
    assert raw[:4] == b"MROM"
    assert ar.HEADER.unpack(raw[:ar.HEADER.size])[1:5] == (1, 5, 3, 3)
    assert len(raw) == ar.HEADER.size + 8 * (5 * 2 + 15 * 3)
    # column-major S: first column's entries come first
    S0 = np.frombuffer(raw[ar.HEADER.size + 80:ar.HEADER.size + 80 + 8 * 15], "<f8")
    assert np.array_equal(S0, a.S[:, 0])


def test_empty_archive(tmp_path, rng):
    a = ar.SnapshotArchive(rng.random((6, 2)), np.empty((18, 0)), 0.1, 0.2)
    ar.write_snapshots(tmp_path / "e.mrom", a)
    b = ar.read_snapshots(tmp_path / "e.mrom")
    assert b.S.shape == (18, 0) and b.n_snapshots == 0


@pytest.mark.parametrize("cut", [3, ar.HEADER.size + 7, -9, -1])
def test_truncated_archive(tmp_path, rng, cut):
    ar.write_snapshots(tmp_path / "a.mrom", make_archive(rng))
    raw = (tmp_path / "a.mrom").read_bytes()
    (tmp_path / "t.mrom").write_bytes(raw[:cut])
    with pytest.raises(FormatError, match="truncated"):
        ar.read_snapshots(tmp_path / "t.mrom")


def test_trailing_garbage(tmp_path, rng):
    ar.write_snapshots(tmp_path / "a.mrom", make_archive(rng, trailer=False))
    with open(tmp_path / "a.mrom", "ab") as fh:
        fh.write(b"junkjunk")
    with pytest.raises(FormatError, match="trailing"):
        ar.read_snapshots(tmp_path / "a.mrom")


def test_bad_magic_and_version(tmp_path, rng):
    ar.write_snapshots(tmp_path / "a.mrom", make_archive(rng))
    raw = bytearray((tmp_path / "a.mrom").read_bytes())
    (tmp_path / "m.mrom").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="magic"):
        ar.read_snapshots(tmp_path / "m.mrom")
    raw[4:8] = (9).to_bytes(4, "little")
    (tmp_path / "v.mrom").write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="version 9"):
        ar.read_snapshots(tmp_path / "v.mrom")


def test_basis_is_not_a_snapshot_archive(tmp_path, rng):
    Phi = np.linalg.qr(rng.normal(size=(30, 3)))[0]
    ar.write_basis(tmp_path / "b.mrob", TrialBasis(Phi, np.array([3.0, 2.0, 1.0, 0.5])), rng.random((10, 2)), 0.1, 0.2)
    with pytest.raises(FormatError, match="magic"):
        ar.read_snapshots(tmp_path / "b.mrob")


def test_basis_round_trip(tmp_path, rng):
    Phi = np.linalg.qr(rng.normal(size=(30, 3)))[0]
    sigma = np.array([3.0, 2.0, 1.0, 0.5])
    x = rng.random((10, 2))
    ar.write_basis(tmp_path / "b.mrob", TrialBasis(Phi, sigma), x, 0.1, 0.2)
    basis, x_G, dx, h = ar.read_basis(tmp_path / "b.mrob")
    assert np.array_equal(basis.Phi, Phi) and np.array_equal(basis.sigma, sigma)
    assert np.array_equal(x_G, x) and (dx, h) == (0.1, 0.2)


@pytest.fixture
def spline_setup():
    x, dx = lattice(12)
    ref = ReferenceSpace(x, PERIODIC, dx, 2 * dx)
    basis = TrialBasis(smooth_modes(x, 3), np.ones(3))
    return ref, basis, build_spline_basis(basis, ref)


def test_spline_round_trip(tmp_path, spline_setup, rng):
    ref, basis, sb = spline_setup
    ar.save_spline(tmp_path / "s.npz", sb)
    loaded = ar.load_spline(tmp_path / "s.npz", ref, basis)
    q = rng.random((25, 2))
    assert np.array_equal(eval_basis(sb, q), eval_basis(loaded, q))


def test_spline_hash_mismatch(tmp_path, spline_setup):
    ref, basis, sb = spline_setup
    ar.save_spline(tmp_path / "s.npz", sb)
    other = TrialBasis(-basis.Phi, basis.sigma)
    with pytest.raises(FormatError, match="hash"):
        ar.load_spline(tmp_path / "s.npz", ref, other)


def test_missing_and_corrupt_spline(tmp_path, spline_setup):
    ref, basis, _ = spline_setup
    with pytest.raises(FormatError, match="not found"):
        ar.load_spline(tmp_path / "absent.npz", ref, basis)
    (tmp_path / "bad.npz").write_bytes(b"not a zip")
    with pytest.raises(FormatError):
        ar.load_spline(tmp_path / "bad.npz", ref, basis)


def test_csv_round_trip(tmp_path, rng):
    rows = rng.normal(size=(5, 3))
    ar.write_csv(tmp_path / "c.csv", ["a", "b", "c"], rows.tolist())
    header, back = ar.read_csv(tmp_path / "c.csv")
    assert header == ["a", "b", "c"]
    assert np.array_equal(back, rows)
