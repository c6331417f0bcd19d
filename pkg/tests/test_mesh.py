import math

import numpy as np
import pytest

import app.services.mesh as mesh_module
from app.core.exceptions import ConfigError, MeshError, MeshInversionError
from app.services.mesh import (
    MeshKind,
    build_mesh,
    conformity,
    dump_mesh,
    load_mesh,
    quasi_uniform_mesh,
    shape_regularity,
    uniform_mesh,
)


def test_uniform_mesh_counts_and_volume():
    for n in (2, 3, 5):
        mesh = uniform_mesh(n)
        assert mesh.n_vertices == n ** 3
        assert mesh.n_elements == 6 * (n - 1) ** 3
        assert np.all(mesh.signed_volumes() > 0.0)
        assert mesh.total_volume() == pytest.approx(1.0, abs=1e-12)
        assert mesh.h == pytest.approx(math.sqrt(3.0) / (n - 1))


def test_uniform_mesh_vertex_numbering():
    mesh = uniform_mesh(3)
    i, j, k = 1, 2, 0
    assert np.allclose(mesh.vertices[i + 3 * j + 9 * k], [0.5, 1.0, 0.0])


def test_uniform_mesh_is_conforming():
    report = conformity(uniform_mesh(2))
    assert report["ok"]
    assert report["boundary_faces"] == 12
    assert report["interior_faces"] == 6
    assert conformity(uniform_mesh(4))["ok"]


def test_uniform_elements_are_congruent():
    q = shape_regularity(uniform_mesh(3))
    assert np.allclose(q, q[0])


def test_quasi_mesh_with_zero_delta_is_uniform():
    a = quasi_uniform_mesh(4, delta=0.0, seed=1)
    b = uniform_mesh(4)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.tets, b.tets)


def test_quasi_mesh_is_deterministic_and_valid():
    a = quasi_uniform_mesh(5, delta=0.2, seed=7)
    b = quasi_uniform_mesh(5, delta=0.2, seed=7)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.all(a.signed_volumes() > 0.0)
    assert a.total_volume() == pytest.approx(1.0, abs=1e-10)
    assert conformity(a)["ok"]
    assert not a.has_duplicate_vertices()

    base = uniform_mesh(5)
    boundary = ~np.all((base.vertices > 0.0) & (base.vertices < 1.0), axis=1)
    assert np.array_equal(a.vertices[boundary], base.vertices[boundary])
    shift = np.linalg.norm(a.vertices - base.vertices, axis=1)
    assert shift.max() <= 0.2 / 4 + 1e-15
    assert shift.max() > 0.0


def test_quasi_mesh_shape_regularity_is_bounded():
    uniform_min = shape_regularity(uniform_mesh(5)).min()
    for seed in range(5):
        q = shape_regularity(quasi_uniform_mesh(5, delta=0.2, seed=seed))
        assert q.min() >= 0.2 * uniform_min


def test_different_seeds_give_different_meshes():
    a = quasi_uniform_mesh(4, delta=0.2, seed=0)
    b = quasi_uniform_mesh(4, delta=0.2, seed=1)
    assert not np.array_equal(a.vertices, b.vertices)


def test_invalid_parameters():
    with pytest.raises(ConfigError):
        uniform_mesh(1)
    with pytest.raises(ConfigError):
        quasi_uniform_mesh(4, delta=0.3)
    with pytest.raises(ConfigError):
        quasi_uniform_mesh(4, delta=-0.1)
    with pytest.raises(ConfigError):
        MeshKind.parse("delaunay")


def test_persistent_inversion_raises_after_shrinking(monkeypatch):
    calls = []

    def always_inverted(base, n, delta, rng):
        calls.append(delta)
        raise MeshInversionError("inverted")

    monkeypatch.setattr(mesh_module, "_perturb_once", always_inverted)
    with pytest.raises(MeshError):
        quasi_uniform_mesh(4, delta=0.2, seed=0)
    assert len(calls) == 5 * 10
    assert calls[0] == 0.2
    assert calls[-1] == pytest.approx(0.2 * 0.5 ** 4)


def test_transient_inversion_is_resampled(monkeypatch):
    original = mesh_module._perturb_once
    calls = []

    def flaky(base, n, delta, rng):
        calls.append(delta)
        if len(calls) <= 3:
            raise MeshInversionError("inverted")
        return original(base, n, delta, rng)

    monkeypatch.setattr(mesh_module, "_perturb_once", flaky)
    mesh = quasi_uniform_mesh(4, delta=0.2, seed=0)
    assert calls == [0.2] * 4
    assert np.all(mesh.signed_volumes() > 0.0)


def test_build_mesh_dispatch():
    assert build_mesh("uniform", 3).n_elements == 48
    assert build_mesh(MeshKind.QUASI, 3, delta=0.1, seed=2).n_elements == 48


def test_dump_and_load(tmp_path):
    mesh = quasi_uniform_mesh(3, delta=0.2, seed=3)
    path = tmp_path / "mesh.txt"
    dump_mesh(mesh, str(path))
    loaded = load_mesh(str(path))
    assert np.array_equal(loaded.tets, mesh.tets)
    assert np.allclose(loaded.vertices, mesh.vertices, rtol=0.0, atol=1e-15)

    bad = tmp_path / "bad.txt"
    bad.write_text("0 0\n", encoding="utf-8")
    with pytest.raises(MeshError):
        load_mesh(str(bad))
