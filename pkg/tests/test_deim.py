import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deimkit.deim import (
    build_deim,
    build_oversampled,
    build_wdeim_generalized,
    build_wdeim_pointwise,
    build_wdeim_scaled,
    canonical_analysis,
    check_bound,
    dgeim_residuals,
    error_decomposition,
    projector_diagnostics,
    read_projector,
    tangent_norm,
    write_diagnostics,
    write_projector,
)
from deimkit.errors import BoundViolationError, ConfigError, DimensionError, RankDeficiencyError
from deimkit.pod import pod_basis
from deimkit.selection import SelectionOperator, lemma_bound, select
from deimkit.weighting import WeightOperator, w_norm, w_operator_norm

from conftest import random_orthonormal, random_spd


def plane(theta):
    u = np.array([[math.cos(theta)], [math.sin(theta)]])
    return build_deim(u, [0])


def weighted_instance(rng, m=30, n=12, r=4, cond=1e3):
    w = WeightOperator.dense(random_spd(rng, m, cond))
    y = rng.standard_normal((m, n)) @ np.diag(np.logspace(0, -3, n))
    return w, y, r


def all_variants(rng, m=30, r=4):
    w, y, r = weighted_instance(rng, m=m, r=r)
    u = random_orthonormal(rng, m, r)
    basis = pod_basis(y, w, rank=r)
    out = {
        "unweighted": build_deim(u, select(u)),
        "generalizedW": build_wdeim_generalized(basis, select(basis.u_euclid)),
        "pointwiseW": build_wdeim_pointwise(y, w, rank=r),
        "scaledPointwiseW": build_wdeim_scaled(y, w, rank=r),
        "oversampled": build_oversampled(basis, select(basis.u_euclid, s=r + 3)),
    }
    return out


def range_basis(d):
    return d.projection_basis()


class TestUnweighted:
    def test_reproduces_range(self, rng):
        u = random_orthonormal(rng, 20, 4)
        d = build_deim(u, select(u))
        f = u @ rng.standard_normal(4)
        assert np.linalg.norm(d.apply(f) - f) <= 1e-10 * np.linalg.norm(f)

    def test_zero(self, rng):
        u = random_orthonormal(rng, 10, 2)
        assert np.array_equal(build_deim(u, select(u)).apply(np.zeros(10)), np.zeros(10))

    def test_plane_norm(self):
        d = plane(math.pi / 3)
        assert np.linalg.norm(d.assemble(), 2) == pytest.approx(2.0, rel=1e-12)
        assert d.kappa == pytest.approx(2.0, rel=1e-12)

    def test_interpolation(self, rng):
        u = random_orthonormal(rng, 25, 5)
        d = build_deim(u, select(u, "deim"))
        f = rng.standard_normal(25)
        assert np.allclose(d.apply(f)[d.indices], f[d.indices], atol=1e-12)

    def test_exhaustive_small_bound(self, rng):
        u = random_orthonormal(rng, 4, 2)
        for idx in itertools.combinations(range(4), 2):
            d = build_deim(u, list(idx))
            for _ in range(100):
                f = rng.standard_normal(4)
                err = np.linalg.norm(f - d.apply(f))
                orth = np.linalg.norm(f - u @ (u.T @ f))
                assert err <= d.kappa * orth * (1 + 1e-10) + 1e-14

    def test_singular_selection(self):
        u = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(RankDeficiencyError, match="sigma_min"):
            build_deim(u, [0, 2])

    def test_sampled_path(self, rng):
        u = random_orthonormal(rng, 30, 5)
        d = build_deim(u, select(u))
        f = rng.standard_normal(30)
        assert np.allclose(d.apply_sampled(f[d.indices]), d.apply(f), rtol=1e-12, atol=1e-14)

    def test_dimension_checks(self, rng):
        u = random_orthonormal(rng, 6, 2)
        d = build_deim(u, select(u))
        with pytest.raises(DimensionError):
            d.apply(np.ones(5))
        with pytest.raises(DimensionError):
            d.apply_sampled(np.ones(3))


class TestGeneralized:
    def test_identity_weight_is_plain_deim(self, rng):
        y = rng.standard_normal((20, 6))
        basis = pod_basis(y, rank=4)
        sel = select(basis.u_euclid)
        a = build_wdeim_generalized(basis, sel).assemble()
        b = build_deim(basis.u_euclid, sel).assemble()
        assert np.allclose(a, b, atol=1e-12)

    def test_diagonal_weight_interpolates_pointwise(self, rng):
        w = WeightOperator.diagonal(rng.uniform(0.5, 3, 15))
        basis = pod_basis(rng.standard_normal((15, 5)), w, rank=3)
        d = build_wdeim_generalized(basis, select(basis.u_euclid))
        f = rng.standard_normal(15)
        assert np.allclose(d.apply(f)[d.indices], f[d.indices], atol=1e-12)

    def test_w_norm_equals_kappa(self, rng):
        w, y, r = weighted_instance(rng)
        basis = pod_basis(y, w, rank=r)
        d = build_wdeim_generalized(basis, select(basis.u_euclid))
        assert w_operator_norm(d.assemble(), w) == pytest.approx(d.kappa, rel=1e-9)

    def test_selection_operator_w_orthonormal(self, rng):
        w, y, r = weighted_instance(rng)
        basis = pod_basis(y, w, rank=r)
        d = build_wdeim_generalized(basis, select(basis.u_euclid))
        s_gen = w.lt_solve(d.selection.matrix())
        assert np.allclose(s_gen.T @ w.matvec(s_gen), np.eye(r), atol=1e-10)

    def test_residuals(self, rng):
        w = WeightOperator.dense(random_spd(rng, 40, 1e4))
        basis = pod_basis(rng.standard_normal((40, 8)), w, rank=5)
        d = build_wdeim_generalized(basis, select(basis.u_euclid))
        f = rng.standard_normal(40)
        assert np.max(np.abs(dgeim_residuals(d, f))) <= 1e-10 * w_norm(f, w)

    def test_residuals_identity_weight_are_pointwise(self, rng):
        basis = pod_basis(rng.standard_normal((12, 5)), rank=3)
        d = build_wdeim_generalized(basis, select(basis.u_euclid))
        f = rng.standard_normal(12)
        assert np.allclose(dgeim_residuals(d, f), (d.apply(f) - f)[d.indices])

    def test_residuals_need_generalized(self, rng):
        u = random_orthonormal(rng, 8, 2)
        with pytest.raises(ConfigError):
            dgeim_residuals(build_deim(u, select(u)), np.ones(8))

    def test_needs_pod_basis(self, rng):
        with pytest.raises(ConfigError):
            build_wdeim_generalized(random_orthonormal(rng, 5, 2), [0, 1])


class TestPointwise:
    def test_identity_weight_matches_srrqr_deim(self, rng):
        y = rng.standard_normal((25, 8))
        d = build_wdeim_pointwise(y, rank=4)
        basis = pod_basis(y, rank=4)
        ref = build_deim(basis.u_euclid, select(basis.u_euclid))
        assert sorted(d.indices) == sorted(ref.indices)
        assert np.allclose(d.assemble(), ref.assemble(), atol=1e-10)

    def test_span_reproduced(self, rng):
        w, y, r = weighted_instance(rng)
        for d in (build_wdeim_pointwise(y, w, rank=r), build_wdeim_scaled(y, w, rank=r)):
            f = d.basis.u_hat @ rng.standard_normal(r)
            assert np.linalg.norm(d.apply(f) - f) <= 1e-9 * np.linalg.norm(f)

    def test_pointwise_interpolation(self, rng):
        w, y, r = weighted_instance(rng)
        for d in (build_wdeim_pointwise(y, w, rank=r), build_wdeim_scaled(y, w, rank=r)):
            f = rng.standard_normal(w.m)
            assert np.allclose(d.apply(f)[d.indices], f[d.indices], atol=1e-10)

    def test_constants(self, rng):
        w, y, r = weighted_instance(rng)
        d2 = build_wdeim_pointwise(y, w, rank=r)
        d3 = build_wdeim_scaled(y, w, rank=r)
        assert d2.error_constant == pytest.approx(math.sqrt(w.cond()) * d2.kappa)
        assert d3.error_constant == pytest.approx(math.sqrt(w.equilibration()[1].cond()) * d3.kappa)
        for d in (d2, d3):
            assert w_operator_norm(d.assemble(), w) <= d.error_constant * (1 + 1e-10)

    def test_scaled_identity_matches_pointwise(self, rng):
        y = rng.standard_normal((20, 7))
        a = build_wdeim_scaled(y, rank=4)
        b = build_wdeim_pointwise(y, rank=4)
        assert np.array_equal(a.indices, b.indices)
        assert np.allclose(a.assemble(), b.assemble(), atol=1e-12)

    def test_scaled_diagonal_weight(self, rng):
        w = WeightOperator.diagonal(rng.uniform(0.1, 10, 20))
        y = rng.standard_normal((20, 7))
        d = build_wdeim_scaled(y, w, rank=4)
        basis = pod_basis(y, w, rank=4)
        ref = build_wdeim_generalized(basis, select(basis.u_euclid))
        assert sorted(d.indices) == sorted(ref.indices)
        assert np.allclose(d.assemble(), ref.assemble(), atol=1e-12)

    def test_scaled_scale_invariance(self, rng):
        w, y, r = weighted_instance(rng)
        a = build_wdeim_scaled(y, w, rank=r)
        b = build_wdeim_scaled(y, w.scaled(1e6), rank=r)
        assert np.array_equal(a.indices, b.indices)
        assert np.allclose(a.assemble(), b.assemble(), atol=1e-10)

    def test_sampled_path(self, rng):
        w, y, r = weighted_instance(rng)
        f = rng.standard_normal(w.m)
        for d in (build_wdeim_pointwise(y, w, rank=r), build_wdeim_scaled(y, w, rank=r)):
            assert np.allclose(d.apply_sampled(f[d.indices]), d.apply(f), rtol=1e-12, atol=1e-13)


class TestOversampledProjector:
    def test_fewer_rows_than_basis(self, rng):
        u = random_orthonormal(rng, 3, 2)
        d = build_oversampled(u, [0])
        assert d.properties == {"interpolation": True, "projection": False, "least_squares": False}
        f = rng.standard_normal(3)
        assert d.apply(f)[0] == pytest.approx(f[0])
        # pseudoinverse oracle: D = U (e1^T U)^+ e1^T
        row = u[[0]]
        ref = u @ np.linalg.pinv(row) @ np.eye(3)[[0]]
        assert np.allclose(d.assemble(), ref, atol=1e-14)
        p = u @ u.T
        assert np.linalg.norm(d.assemble() @ p - p) > 1e-3

    def test_more_rows_than_basis(self, rng):
        u = random_orthonormal(rng, 4, 1)
        d = build_oversampled(u, [0, 1, 2])
        assert d.properties == {"interpolation": False, "projection": True, "least_squares": True}
        p = u @ u.T
        assert np.allclose(d.assemble() @ p, p, atol=1e-10)
        f = rng.standard_normal(4)
        su, sf = u[:3], f[:3]
        c = np.linalg.solve(su.T @ su, su.T @ sf)
        assert np.allclose(d.apply(f)[:3], su @ c, atol=1e-12)

    def test_square_is_plain(self, rng):
        u = random_orthonormal(rng, 8, 3)
        sel = select(u)
        assert np.allclose(build_oversampled(u, sel).assemble(), build_deim(u, sel).assemble())


class TestIdentities:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10_000))
    def test_all_variants(self, seed):
        rng = np.random.default_rng(seed)
        for name, d in all_variants(rng).items():
            dm = d.assemble()
            scale = max(np.linalg.norm(dm), 1.0)
            assert np.linalg.norm(dm @ dm - dm) <= 1e-9 * scale, name
            ub = range_basis(d)
            p = ub @ (ub.T @ d.weight.todense())
            assert np.linalg.norm(dm @ p - p) <= 1e-9 * scale, name
            assert np.linalg.norm(dm, 2) == pytest.approx(np.linalg.norm(np.eye(d.m) - dm, 2), rel=1e-9)
            f = rng.standard_normal(d.m)
            err = w_norm(f - d.apply(f), d.weight)
            orth = w_norm(f - d.project(f), d.weight)
            check_bound(err, w_operator_norm(dm, d.weight), orth, rtol=1e-9)
            check_bound(err, d.error_constant, orth, rtol=1e-9)

    def test_eta_factor_bounds(self, rng):
        eta = 2.0
        w, y, r = weighted_instance(rng, m=40, r=5)
        ceiling = lemma_bound(eta, r, w.m)
        basis = pod_basis(y, w, rank=r)
        d1 = build_wdeim_generalized(basis, select(basis.u_euclid, "srrqr", eta))
        d2 = build_wdeim_pointwise(y, w, rank=r, eta=eta)
        d3 = build_wdeim_scaled(y, w, rank=r, eta=eta)
        factors = [1.0, math.sqrt(w.cond()), math.sqrt(w.equilibration()[1].cond())]
        for d, factor in zip((d1, d2, d3), factors):
            assert d.error_constant <= ceiling * factor
            for _ in range(20):
                f = rng.standard_normal(w.m)
                orth = w_norm(f - d.project(f), w)
                check_bound(w_norm(f - d.apply(f), w), ceiling * factor, orth)

    def test_check_bound_raises(self):
        with pytest.raises(BoundViolationError):
            check_bound(2.0, 1.0, 1.0)
        assert check_bound(1.0, 1.0, 1.0)


class TestCanonical:
    def test_plane(self):
        cs = canonical_analysis(plane(math.pi / 3))
        assert (cs.ell, cs.p) == (0, 1)
        assert cs.angles[0] == pytest.approx(math.pi / 3, rel=1e-12)
        assert cs.norm_d == pytest.approx(2.0, rel=1e-12)

    def test_aligned_selection(self):
        u = np.eye(6)[:, :3]
        cs = canonical_analysis(build_deim(u, [0, 1, 2]))
        assert (cs.ell, cs.p, cs.norm_d) == (3, 0, 1.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_three_routes(self, seed):
        rng = np.random.default_rng(seed)
        u = random_orthonormal(rng, 12, 3)
        d = build_deim(u, select(u))
        dm = d.assemble()
        cs = canonical_analysis(d)
        assert cs.norm_d == pytest.approx(np.linalg.norm(dm, 2), rel=1e-8)
        assert cs.norm_d == pytest.approx(np.linalg.norm(np.eye(12) - dm, 2), rel=1e-8)
        assert cs.norm_d == pytest.approx(math.sqrt(1 + tangent_norm(d) ** 2), rel=1e-8)

    def test_leading_identity_rows(self, rng):
        u = random_orthonormal(rng, 10, 3)
        d = build_deim(u, [0, 1, 2])
        assert np.linalg.norm(d.assemble(), 2) == pytest.approx(math.sqrt(1 + tangent_norm(d) ** 2), rel=1e-8)

    def test_weighted_norm(self, rng):
        for name, d in all_variants(rng).items():
            cs = canonical_analysis(d)
            assert cs.norm_d == pytest.approx(w_operator_norm(d.assemble(), d.weight), rel=1e-8), name

    def test_canonical_basis_blocks(self, rng):
        u = random_orthonormal(rng, 9, 3)
        d = build_deim(u, select(u))
        cs = canonical_analysis(d, with_z=True)
        z = cs.z_basis
        assert np.allclose(z.T @ z, np.eye(9), atol=1e-12)
        t = z.T @ d.assemble() @ z
        expected = np.zeros((9, 9))
        tans = np.tan(np.sort(cs.angles))
        # blocks [[1, tan psi], [0, 0]] in the order of decreasing cosine
        for i, tn in enumerate(tans):
            expected[2 * i, 2 * i] = 1.0
            expected[2 * i, 2 * i + 1] = tn
        assert np.allclose(t, expected, atol=1e-10)

    def test_canonical_basis_size_limit(self, rng):
        u = random_orthonormal(rng, 501, 1)
        with pytest.raises(ConfigError):
            canonical_analysis(build_deim(u, select(u)), with_z=True)


class TestErrorDecomposition:
    def test_plane(self):
        theta = 0.7
        d = plane(theta)
        f = np.array([0.0, 1.0])
        e = error_decomposition(d, f)
        assert e.total == pytest.approx(np.linalg.norm(f - d.apply(f)))
        assert e.orth_err == pytest.approx(math.cos(theta))
        assert e.total**2 == pytest.approx(e.orth_err**2 + e.oblique_excess**2, rel=1e-12)

    def test_aligned_has_no_excess(self):
        u = np.eye(5)[:, :2]
        e = error_decomposition(build_deim(u, [0, 1]), np.array([0.0, 0.0, 1.0, 2.0, 0.0]))
        assert e.oblique_excess == 0.0
        assert e.kappa_prime == 1.0

    def test_in_range_is_rejected(self, rng):
        u = random_orthonormal(rng, 6, 2)
        with pytest.raises(ConfigError):
            error_decomposition(build_deim(u, select(u)), u[:, 0])

    def test_kappa_prime_and_worst_direction(self, rng):
        u = random_orthonormal(rng, 50, 5)
        d = build_deim(u, select(u))
        dn = np.linalg.norm(d.assemble(), 2)
        for _ in range(100):
            e = error_decomposition(d, rng.standard_normal(50))
            assert e.kappa_prime <= dn * (1 + 1e-12)
        # the worst direction attains the norm
        _, _, vt = np.linalg.svd(np.eye(50) - d.assemble())
        e = error_decomposition(d, vt[0])
        assert e.kappa_prime == pytest.approx(dn, rel=1e-8)

    def test_needs_projection_property(self, rng):
        u = random_orthonormal(rng, 5, 2)
        with pytest.raises(ConfigError):
            error_decomposition(build_oversampled(u, [0]), np.ones(5))


class TestOutput:
    def test_diagnostics_csv(self, rng, tmp_path):
        u = random_orthonormal(rng, 10, 2)
        d = build_deim(u, select(u))
        write_diagnostics([projector_diagnostics(d)], tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "variant,r,s,eta,kappa,error_constant,angles"
        assert lines[1].startswith("unweighted,2,2,2,")

    def test_projector_file(self, rng, tmp_path):
        u = random_orthonormal(rng, 10, 2)
        d = build_deim(u, select(u))
        write_projector(d, tmp_path / "p.txt", "basis.txt")
        variant, path, sel = read_projector(tmp_path / "p.txt")
        assert (variant, path) == ("unweighted", "basis.txt")
        assert np.array_equal(sel.indices, d.indices)

    def test_incomplete_projector_file(self, tmp_path):
        (tmp_path / "p.txt").write_text("variant unweighted\n")
        with pytest.raises(ConfigError):
            read_projector(tmp_path / "p.txt")


def test_selection_dimension_mismatch(rng):
    u = random_orthonormal(rng, 6, 2)
    with pytest.raises(DimensionError):
        build_deim(u, SelectionOperator(np.array([0, 1]), 7, "given"))
