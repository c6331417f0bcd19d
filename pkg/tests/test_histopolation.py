import numpy as np
import pytest

from app.core.exceptions import ConfigError
from app.schemas.histo import empirical_order
from app.services.barypoly import BaryPoly
from app.services.bases import BasisMode, build_bundle
from app.services.geometry import random_simplex, reference_simplex
from app.services.histopolation import (
    LocalScheme,
    LocalSolver,
    convergence_study,
    global_error,
    solve_local_linear,
    solve_local_quadratic,
)
from app.services.mesh import MeshKind, uniform_mesh
from app.services.moment_system import dirichlet_A_formula
from app.services.moments import FunctionalQuadrature, WeightSpec, functional_data, gram, weighted_inner


UNIT_DIRICHLET = WeightSpec.dirichlet([1, 1, 1, 1])


def _random_p2(rng, nvars: int) -> BaryPoly:
    terms = {}
    for i in range(nvars):
        for j in range(i, nvars):
            e = [0] * nvars
            e[i] += 1
            e[j] += 1
            terms[tuple(e)] = rng.standard_normal()
    return BaryPoly(nvars, terms) + BaryPoly.linear(rng.standard_normal(nvars))


def _cartesian_quadratic(rng):
    c = rng.standard_normal(10)

    def f(p):
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        return (c[0] + c[1] * x + c[2] * y + c[3] * z + c[4] * x * x
                + c[5] * y * y + c[6] * z * z + c[7] * x * y + c[8] * y * z + c[9] * x * z)
    return f


# ============================================================
# 单个单纯形
# ============================================================

def test_constant_function_is_reproduced(ref_tet):
    w = WeightSpec.constant(3)
    bundle = build_bundle(ref_tet, w)
    data = functional_data(ref_tet, w, BaryPoly.constant(4, 1.0), bundle)
    sol = solve_local_quadratic(ref_tet, w, bundle, data)
    assert np.allclose(sol.a, 1.0)
    assert sol.element == 0
    assert solve_local_quadratic(ref_tet, w, bundle, data, element=17).element == 17
    assert np.allclose(sol.gamma, 0.0, atol=1e-12)
    assert np.allclose(sol.xi, 0.0, atol=1e-12)


@pytest.mark.parametrize("mode", list(BasisMode))
def test_quadratics_are_reproduced_exactly(rng, mode):
    s = random_simplex(3, rng)
    for w in (WeightSpec.constant(3), WeightSpec.affine([1, 2, 3, 4]), WeightSpec.dirichlet([0.7, 2.0, 1.5, 3.0])):
        bundle = build_bundle(s, w, mode)
        p = _random_p2(rng, 4)
        sol = solve_local_quadratic(s, w, bundle, functional_data(s, w, p, bundle))
        recon = sol.to_poly(bundle)
        lam = rng.dirichlet(np.ones(4), size=50)
        assert np.allclose(recon(lam), p(lam), atol=1e-9)

        again = functional_data(s, w, recon, bundle)
        original = functional_data(s, w, p, bundle)
        assert np.allclose(again.as_array(), original.as_array(), atol=1e-10)


def test_quadratics_are_reproduced_in_two_dimensions(rng):
    s = reference_simplex(2)
    w = WeightSpec.dirichlet([2.0, 1.0, 3.0])
    bundle = build_bundle(s, w, BasisMode.RAW)
    p = _random_p2(rng, 3)
    sol = solve_local_quadratic(s, w, bundle, functional_data(s, w, p, bundle))
    lam = rng.dirichlet(np.ones(3), size=20)
    assert sol.xi.size == 0
    assert np.allclose(sol.to_poly(bundle)(lam), p(lam), atol=1e-9)


def test_canonical_coefficients_are_projections(ref_tet):
    w = WeightSpec.constant(3)
    bundle = build_bundle(ref_tet, w, BasisMode.CANONICAL)
    f = BaryPoly.monomial([0, 1, 1, 0])
    sol = solve_local_quadratic(ref_tet, w, bundle, functional_data(ref_tet, w, f, bundle))
    resid = f - BaryPoly.linear(sol.a)

    expected_xi = [weighted_inner(w, f, r) for r in bundle.rho]
    assert np.allclose(sol.xi, expected_xi, atol=1e-12)
    g_psi = gram(w, list(bundle.psi))
    expected_gamma = np.linalg.solve(g_psi, [weighted_inner(w, resid, p) for p in bundle.psi])
    assert np.allclose(sol.gamma, expected_gamma, atol=1e-10)


def test_linear_scheme(rng):
    s = random_simplex(3, rng)
    w = WeightSpec.constant(3)
    p = BaryPoly.linear([1.0, -2.0, 0.5, 3.0])
    data = functional_data(s, w, p, build_bundle(s, w))
    assert np.allclose(solve_local_linear(s, w, data), [1.0, -2.0, 0.5, 3.0])
    assert np.allclose(solve_local_linear(s, w, [2.0] * 4), 2.0)

    i_data = rng.standard_normal(4)
    expected = np.linalg.solve(dirichlet_A_formula([1, 1, 1, 1]), i_data)
    assert np.allclose(solve_local_linear(s, UNIT_DIRICHLET, i_data), expected)


def test_vectorized_solver_matches_single_solve(rng):
    s = reference_simplex(3)
    w = WeightSpec.dirichlet([2, 2, 2, 2])
    solver = LocalSolver(w, LocalScheme.QUADRATIC)
    polys = [_random_p2(rng, 4) for _ in range(3)]
    datas = [functional_data(s, w, p, solver.bundle) for p in polys]
    coeffs = solver.solve(
        np.array([d.I for d in datas]), np.array([d.L for d in datas]), np.array([d.V for d in datas])
    )
    assert coeffs.shape == (3, 4 + 4 + 2)
    lam = rng.dirichlet(np.ones(4), size=10)
    values = coeffs @ solver.basis_values(lam).T
    for k, p in enumerate(polys):
        assert np.allclose(values[k], p(lam), atol=1e-9)


# ============================================================
# 网格
# ============================================================

def test_global_error_vanishes_on_polynomials(rng):
    mesh = uniform_mesh(5)
    f2 = _cartesian_quadratic(rng)
    assert global_error(mesh, UNIT_DIRICHLET, f2, LocalScheme.QUADRATIC).error <= 1e-8

    c = rng.standard_normal(4)

    def f1(p):
        return c[0] + c[1] * p[..., 0] + c[2] * p[..., 1] + c[3] * p[..., 2]

    assert global_error(mesh, UNIT_DIRICHLET, f1, LocalScheme.LINEAR).error <= 1e-9
    assert global_error(mesh, UNIT_DIRICHLET, f1, LocalScheme.QUADRATIC).error <= 1e-9


def test_global_error_requires_three_dimensions():
    mesh = uniform_mesh(2)
    with pytest.raises(ConfigError):
        global_error(mesh, WeightSpec.constant(2), lambda p: p[..., 0], LocalScheme.LINEAR)


def test_stencil_data_matches_closed_form_on_mesh_elements(rng):
    mesh = uniform_mesh(3)
    bundle = build_bundle(reference_simplex(3), UNIT_DIRICHLET)
    stencil = FunctionalQuadrature(UNIT_DIRICHLET, bundle.q, bundle.rho)
    f = _cartesian_quadratic(rng)
    i_data, l_data, v_data = stencil.evaluate(mesh.element_vertices(), f)
    for k in (0, 17, 47):
        element = mesh.element(k)
        exact = functional_data(element, UNIT_DIRICHLET, f, bundle)
        assert np.allclose(i_data[k], exact.I)
        assert np.allclose(l_data[k], exact.L)
        assert np.allclose(v_data[k], exact.V)


@pytest.fixture(scope="module")
def uniform_f1_table():
    return convergence_study(1, UNIT_DIRICHLET, [5, 9, 13], mesh_kind=MeshKind.UNIFORM)


def test_convergence_on_uniform_meshes(uniform_f1_table):
    levels = uniform_f1_table.levels
    assert [lv.n for lv in levels] == [5, 9, 13]
    for lv in levels:
        assert lv.err_quadratic < lv.err_linear
    assert levels[-1].order_quadratic >= 2.7
    assert 1.6 <= levels[-1].order_linear <= 2.4
    assert levels[0].order_linear is None

    rows = uniform_f1_table.rows()
    assert len(rows) == 6
    assert [r[2] for r in rows[:2]] == ["linear", "quadratic"]


def test_convergence_on_quasi_uniform_meshes(uniform_f1_table):
    quasi = convergence_study(1, UNIT_DIRICHLET, [5, 9, 13], mesh_kind=MeshKind.QUASI, delta=0.2, seed=0)
    uni, qu = uniform_f1_table.levels[-1], quasi.levels[-1]
    for lv in quasi.levels:
        assert lv.err_quadratic < lv.err_linear
    assert qu.order_quadratic >= 2.7
    assert 1.6 <= qu.order_linear <= 2.4
    assert abs(qu.order_quadratic - uni.order_quadratic) <= 0.4
    assert abs(qu.order_linear - uni.order_linear) <= 0.4


def test_empirical_order():
    assert empirical_order(1.0, 0.25, 1.0, 0.5) == pytest.approx(2.0)
    assert empirical_order(0.0, 0.25, 1.0, 0.5) is None
