import math

import numpy as np
import pytest

from app.core.exceptions import ConfigError, MomentsError
from app.services.barypoly import BaryPoly
from app.services.bases import BasisMode, build_bundle
from app.services.geometry import random_simplex, reference_simplex
from app.services.moments import (
    DataVector,
    FunctionalQuadrature,
    WeightKind,
    WeightSpec,
    density_relative,
    expectation,
    face_density,
    functional_data,
    gram,
    inner_product_volume,
    monomial_moment,
    quad_rule_simplex,
    reference_rule,
)


def _random_quadratic(rng, nvars: int) -> BaryPoly:
    terms = {}
    for i in range(nvars):
        e = [0] * nvars
        e[i] = 1
        terms[tuple(e)] = rng.standard_normal()
        for j in range(i, nvars):
            e2 = [0] * nvars
            e2[i] += 1
            e2[j] += 1
            terms[tuple(e2)] = rng.standard_normal()
    return BaryPoly(nvars, terms)


def test_monomial_moments_on_reference_tet(ref_tet):
    assert monomial_moment(ref_tet, [0, 0, 0, 0]) == pytest.approx(1.0 / 6.0)
    assert monomial_moment(ref_tet, [1, 0, 0, 0]) == pytest.approx(1.0 / 24.0)
    assert monomial_moment(ref_tet, [1, 1, 0, 0]) == pytest.approx(1.0 / 120.0)
    assert monomial_moment(ref_tet, [2, 0, 0, 0]) == pytest.approx(1.0 / 60.0)


def test_non_integrable_exponent_rejected(ref_tet):
    with pytest.raises(MomentsError):
        monomial_moment(ref_tet, [-1.0, 0, 0, 0])
    with pytest.raises(MomentsError):
        monomial_moment(ref_tet, [0, 0, 0])


def test_constant_weight_equals_unit_dirichlet(rng):
    p = _random_quadratic(rng, 4) * BaryPoly.coordinate(4, 2)
    const = WeightSpec.constant(3)
    assert expectation(const, p) == pytest.approx(expectation(WeightSpec.dirichlet([1, 1, 1, 1]), p), rel=1e-12)
    assert expectation(const, p) == pytest.approx(expectation(WeightSpec.affine([2, 2, 2, 2]), p), rel=1e-12)


def test_dirichlet_and_affine_first_moments():
    alpha = np.array([0.7, 2.0, 3.5, 1.3])
    s_tot = alpha.sum()
    dirichlet = WeightSpec.dirichlet(alpha)
    affine = WeightSpec.affine(alpha)
    for i in range(4):
        lam_i = BaryPoly.coordinate(4, i)
        assert expectation(dirichlet, lam_i) == pytest.approx(alpha[i] / s_tot, rel=1e-12)
        assert expectation(affine, lam_i) == pytest.approx((s_tot + alpha[i]) / (5.0 * s_tot), rel=1e-12)


def test_densities_are_normalized():
    for w in (WeightSpec.constant(3), WeightSpec.dirichlet([0.6, 2, 3, 4.5]), WeightSpec.affine([1, 2, 3, 4])):
        assert expectation(w, BaryPoly.constant(4)) == pytest.approx(1.0, rel=1e-12)
        assert inner_product_volume(reference_simplex(3), w, BaryPoly.constant(4), BaryPoly.constant(4)) == pytest.approx(1.0)


def test_face_density_drops_opposite_parameter():
    w = WeightSpec.dirichlet([1.5, 2.0, 3.0, 4.0])
    fd = face_density(w, 1)
    assert fd.weight.kind is WeightKind.DIRICHLET
    assert fd.params == (1.5, 3.0, 4.0)
    assert face_density(WeightSpec.constant(3), 0).weight.alpha == (1.0, 1.0, 1.0)
    with pytest.raises(MomentsError):
        face_density(w, 4)


def test_weight_spec_parse():
    assert WeightSpec.parse("constant").kind is WeightKind.CONSTANT
    assert WeightSpec.parse("dirichlet:2").alpha == (2.0, 2.0, 2.0, 2.0)
    assert WeightSpec.parse("affine:1,2,3", d=2).alpha == (1.0, 2.0, 3.0)
    with pytest.raises(ConfigError):
        WeightSpec.parse("gauss:1")
    with pytest.raises(ConfigError):
        WeightSpec.parse("dirichlet:1,2")
    with pytest.raises(ConfigError):
        WeightSpec.dirichlet([1.0, -1.0, 1.0])


def test_gram_is_symmetric_positive_definite(rng):
    w = WeightSpec.dirichlet([1.2, 0.8, 2.5, 3.1])
    polys = [BaryPoly.coordinate(4, i) for i in range(4)]
    g = gram(w, polys)
    assert np.allclose(g, g.T)
    assert np.all(np.linalg.eigvalsh(g) > 0.0)
    assert gram(w, polys[:2], polys).shape == (2, 4)


def test_reference_rule_is_exact_to_degree_nine():
    bary, wts = reference_rule(3, 5)
    assert wts.sum() == pytest.approx(1.0)
    assert np.all(bary >= 0.0)
    for exps in ([2, 1, 3, 0], [0, 0, 0, 9], [4, 1, 2, 2]):
        approx = float(np.sum(wts * np.prod(bary ** np.array(exps), axis=1)))
        exact = monomial_moment(reference_simplex(3), exps) / reference_simplex(3).volume
        assert approx == pytest.approx(exact, rel=1e-12)


def test_quad_rule_simplex_scales_with_volume(rng):
    s = random_simplex(3, rng)
    rule = quad_rule_simplex(s, 4)
    assert rule.weights.sum() == pytest.approx(s.volume)
    assert np.allclose(s.barycentric(rule.points), rule.bary)


def test_relative_density_integrates_against_quadrature():
    bary, wts = reference_rule(3, 5)
    w = WeightSpec.dirichlet([2, 3, 1, 2])
    rel = density_relative(w, bary)
    assert float(wts @ rel) == pytest.approx(1.0, rel=1e-12)
    p = BaryPoly.monomial([1, 0, 2, 0])
    assert float(wts @ (rel * p(bary))) == pytest.approx(expectation(w, p), rel=1e-12)

    affine = WeightSpec.affine([1, 2, 3, 4])
    rel = density_relative(affine, bary)
    assert float(wts @ (rel * p(bary))) == pytest.approx(expectation(affine, p), rel=1e-12)


def test_singular_dirichlet_refuses_quadrature(ref_tet):
    w = WeightSpec.dirichlet([0.5, 1, 1, 1])
    with pytest.raises(MomentsError):
        FunctionalQuadrature(w, q=[BaryPoly.constant(3)] * 4, rho=[])


def test_quadrature_data_matches_closed_form_for_polynomials(rng):
    s = random_simplex(3, rng)
    w = WeightSpec.dirichlet([2, 2, 2, 2])
    bundle = build_bundle(s, w, BasisMode.CANONICAL)
    p = _random_quadratic(rng, 4)

    exact = functional_data(s, w, p, bundle)
    numeric = functional_data(s, w, lambda x: p(s.barycentric(x)), bundle)
    assert np.allclose(numeric.I, exact.I, rtol=1e-11, atol=1e-12)
    assert np.allclose(numeric.L, exact.L, rtol=1e-11, atol=1e-12)
    assert np.allclose(numeric.V, exact.V, rtol=1e-11, atol=1e-12)


def test_constant_function_data():
    s = reference_simplex(3)
    w = WeightSpec.affine([1, 2, 3, 4])
    bundle = build_bundle(s, w, BasisMode.RAW)
    data = functional_data(s, w, BaryPoly.constant(4, 3.0), bundle)
    assert np.allclose(data.I, 3.0)
    assert np.allclose(data.L, 0.0, atol=1e-13)
    assert np.allclose(data.V, 0.0, atol=1e-13)

    arr = data.as_array()
    assert arr.size == 4 + 4 + 2
    back = DataVector.from_array(arr, 3)
    assert np.allclose(back.V, data.V)
    assert math.isclose(data.to_dict()["I"][0], 3.0)
