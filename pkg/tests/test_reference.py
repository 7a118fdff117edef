import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import lattice
from mrom.domain import Geometry
from mrom.errors import HoleError
from mrom.reference import (
    ReferenceSpace, Snapshot, SnapshotMatrix, assemble_snapshots, energy_table, fix_signs, map_fields,
    map_to_reference, pod, split_state, stack_state,
)
from mrom.sph import FluidModel, make_particles

PERIODIC = Geometry((0.0, 1.0, 0.0, 1.0), periodic=(True, True))


def ref_space(n=20, h_factor=2.0):
    x, dx = lattice(n)
    return ReferenceSpace(x, PERIODIC, dx, h_factor * dx)


def test_state_layout():
    rho = np.array([1.0, 2.0])
    u = np.array([[3.0, 4.0], [5.0, 6.0]])
    w = stack_state(rho, u)
    assert w.tolist() == [1, 3, 4, 2, 5, 6]
    r2, u2 = split_state(w)
    assert np.array_equal(r2, rho) and np.array_equal(u2, u)


def test_reference_positions_frozen():
    ref = ref_space(5)
    with pytest.raises(ValueError):
        ref.x_G[0, 0] = 1.0


def test_constant_snapshot_maps_to_constants(rng):
    ref = ref_space()
    x = PERIODIC.wrap(ref.x_G + rng.uniform(-0.3, 0.3, ref.x_G.shape) * ref.dx)
    snap = Snapshot(0, 0.0, x, np.full(len(x), 1000.0), np.tile([1.0, 0.0], (len(x), 1)))
    out = map_to_reference(snap, ref).reshape(-1, 3)
    assert np.allclose(out, [1000.0, 1.0, 0.0], rtol=0, atol=1e-12 * 1000)


def test_self_map_passes_smooth_field():
    x, dx = lattice(40)
    ref = ReferenceSpace(x, PERIODIC, dx, 0.55 * dx)
    rho = 1000 * (1 + 0.01 * np.sin(2 * np.pi * x[:, 0]))
    u = np.column_stack([np.sin(2 * np.pi * x[:, 1]), np.cos(2 * np.pi * x[:, 0])])
    out = map_to_reference(Snapshot(0, 0.0, x, rho, u), ref).reshape(-1, 3)
    assert np.max(np.abs(out[:, 0] - rho) / rho) <= 1e-3
    assert np.max(np.abs(out[:, 1:] - u)) <= 1e-3


def test_linear_field_interior():
    ref = ref_space(20)
    geom = Geometry((0.0, 1.0, 0.0, 1.0))
    ref = ReferenceSpace(ref.x_G, geom, ref.dx, ref.h)
    x = ref.x_G
    vals = map_fields(x, x, x[:, 0], geom, ref.h)
    interior = np.all((x > 0.25) & (x < 0.75), axis=1)
    assert np.max(np.abs(vals[interior] - x[interior, 0]) / x[interior, 0]) <= 1e-2


def test_hole_error():
    ref = ref_space(10)
    x = np.array([[0.05, 0.05]])
    with pytest.raises(HoleError) as exc:
        map_to_reference(Snapshot(0, 0.0, x, np.ones(1), np.zeros((1, 2))), ref)
    assert len(exc.value.indices) > 0


def test_volume_weights():
    x, dx = lattice(10)
    ref = ReferenceSpace(x, PERIODIC, dx, 2 * dx)
    m = FluidModel(rho0=1.0, U_max=1.0, mu=0.0, h=2 * dx, dx=dx)
    ps = make_particles(x, np.zeros_like(x), np.full(len(x), 2.0), m)
    # uniform density: volume weights are constant and cancel
    assert np.allclose(map_to_reference(ps, ref, "volume"), map_to_reference(ps, ref, "fixed"), atol=1e-14)
    with pytest.raises(ValueError):
        map_to_reference(Snapshot(0, 0.0, x, ps.rho, ps.u), ref, "volume")


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_mapped_values_in_donor_hull(seed):
    rng = np.random.default_rng(seed)
    ref = ref_space(12)
    x = PERIODIC.wrap(ref.x_G + rng.uniform(-0.4, 0.4, ref.x_G.shape) * ref.dx)
    vals = rng.normal(size=len(x))
    out = map_fields(ref.x_G, x, vals, PERIODIC, ref.h)
    assert out.min() >= vals.min() - 1e-12 and out.max() <= vals.max() + 1e-12


def _stream(ref, n_steps, field=lambda k: 1.0):
    for k in range(n_steps):
        yield Snapshot(k, 0.1 * k, ref.x_G, np.full(ref.n, 1000.0 * field(k)), np.zeros((ref.n, 2)))


def test_assemble_order_and_interval():
    ref = ref_space(6)
    R, L = assemble_snapshots(_stream(ref, 3, lambda k: 1 + k), ref, 1)
    assert R.n_snapshots == 3 and L.n_snapshots == 3
    assert np.allclose(R.data[0], [1000, 2000, 3000])
    assert R.space_tag == "reference" and L.space_tag == "lagrangian"
    R2, _ = assemble_snapshots(_stream(ref, 7), ref, 3)
    assert np.allclose(R2.times, [0.0, 0.3, 0.6])


def test_constant_run_has_rank_one():
    ref = ref_space(6)
    R, _ = assemble_snapshots(_stream(ref, 4), ref)
    s = np.linalg.svd(R.data, compute_uv=False)
    assert s[1] <= 1e-12 * s[0]


def test_empty_stream():
    ref = ref_space(4)
    R, L = assemble_snapshots(iter([]), ref)
    assert R.data.shape == (3 * ref.n, 0)


def test_hstack_rejects_mixed_spaces():
    a = SnapshotMatrix(np.zeros((6, 2)), 1, "reference")
    b = SnapshotMatrix(np.zeros((6, 1)), 1, "lagrangian")
    assert SnapshotMatrix.hstack([a, a]).n_snapshots == 4
    with pytest.raises(ValueError):
        SnapshotMatrix.hstack([a, b])


def test_rank_one_pod(rng):
    a, b, sig = rng.normal(size=30), rng.normal(size=5), 2.5
    basis = pod(sig * np.outer(a, b), 1)
    assert basis.sigma[0] == pytest.approx(sig * np.linalg.norm(a) * np.linalg.norm(b), rel=1e-12)
    assert np.all(basis.sigma[1:] <= 1e-12 * basis.sigma[0])
    assert abs(abs(basis.Phi[:, 0] @ a) - np.linalg.norm(a)) <= 1e-12 * np.linalg.norm(a)


@settings(max_examples=25)
@given(st.integers(0, 2**31), st.integers(3, 40), st.integers(1, 12))
def test_pod_properties(seed, n_rows, n_cols):
    rng = np.random.default_rng(seed)
    S = rng.normal(size=(3 * n_rows, n_cols)) * np.logspace(0, -3, n_cols)
    M = int(rng.integers(1, min(S.shape) + 1))
    b = pod(S, M)
    assert np.allclose(b.Phi.T @ b.Phi, np.eye(M), atol=1e-10)
    assert np.all(np.diff(b.sigma) <= 1e-12 * b.sigma[0])
    e = [b.energy(m) for m in range(1, len(b.sigma) + 1)]
    assert np.all(np.diff(e) >= -1e-15)
    resid = np.linalg.norm(S - b.Phi @ (b.Phi.T @ S)) ** 2
    tail = np.sum(b.sigma[M:] ** 2)
    assert abs(resid - tail) <= 1e-8 * max(np.sum(b.sigma**2), 1e-300)


def test_pod_sign_convention(rng):
    b = pod(rng.normal(size=(12, 4)), 4)
    idx = np.argmax(np.abs(b.Phi), axis=0)
    assert np.all(b.Phi[idx, np.arange(4)] > 0)
    assert np.array_equal(fix_signs(b.Phi), b.Phi)


def test_pod_rank_bounds(rng):
    S = rng.normal(size=(9, 3))
    with pytest.raises(ValueError):
        pod(S, 0)
    with pytest.raises(ValueError):
        pod(S, 4)


def test_centring_toggle(rng):
    S = rng.normal(size=(9, 5)) + 10.0
    plain, centred = pod(S, 2), pod(S, 2, centre=True)
    assert plain.mean is None
    assert np.allclose(centred.mean, S.mean(axis=1))
    assert centred.sigma[0] < plain.sigma[0]


def test_energy_table():
    S = np.diag([3.0, 2.0, 1.0])
    t = energy_table(S, 50)
    assert t.shape == (3, 2)
    assert np.allclose(t[:, 1], np.cumsum([9, 4, 1]) / 14)
