import numpy as np
import pytest

from steklov_afem import (
    DomainSpec,
    RunConfig,
    assemble,
    bisect,
    generate_uniform,
    inverse_step,
    prolong,
    rayleigh_quotient,
    run_scheme_1,
    shifted_inverse_step,
    solve_coarse,
)
from steklov_afem.assembly import FormPair
from steklov_afem.eigensolve import dense_eigenpairs, shift_invert_eigs
from steklov_afem.errors import BoundaryNullError, DegenerateStartError, StructuralError
from steklov_afem.mesh import uniform_refine


def dense_basis(forms):
    lam, U = dense_eigenpairs(forms)
    return lam, U / np.sqrt(np.einsum("ij,ij->j", U, forms.K @ U))


def eigenspace(lam, k, gap=1e-8):
    return [j for j in range(len(lam)) if abs(lam[j] - lam[k - 1]) <= gap * lam[k - 1]]


def a_dist(forms, U, cols, u):
    """Energy-norm distance from ``u`` to the span of ``U[:, cols]`` (a-orthonormal)."""
    P = U[:, cols]
    r = u - P @ (P.T @ (forms.K @ u))
    return float(np.sqrt(max(r @ forms.K @ r, 0.0)))


def refine_chain(mesh, times):
    chain = [mesh]
    for _ in range(times):
        chain.append(uniform_refine(chain[-1], 1))
    return chain


def prolong_chain(chain, u):
    for coarse, fine in zip(chain[:-1], chain[1:]):
        u = prolong(coarse, fine, u)
    return u


class TestCoarseSolve:
    def test_matches_dense_oracle(self, small_problems):
        for name, mesh, forms in small_problems:
            count = min(6, forms.n - 2)
            basis = solve_coarse(forms, count)
            lam, _ = dense_eigenpairs(forms)
            rel = np.abs(basis.lambdas - lam[:count]) / lam[:count]
            assert rel.max() <= 1e-10, name

    def test_two_triangle_square(self, square2):
        forms = assemble(square2)
        basis = solve_coarse(forms, 2)
        lam, _ = dense_eigenpairs(forms)
        assert np.allclose(basis.lambdas, lam[:2], rtol=1e-10)

    def test_pair_invariants(self, small_problems):
        _, _, forms = small_problems[-1]
        basis = solve_coarse(forms, 5)
        V = basis.vectors
        gram = V.T @ forms.K @ V
        assert np.abs(gram - np.eye(5)).max() <= 1e-10
        assert np.all(np.diff(basis.lambdas) >= 0)
        for p in basis:
            assert p.lam > 0
            assert abs(forms.a_norm(p.coeffs) - 1) <= 1e-12
            assert p.residual <= 1e-10
            assert forms.M @ p.coeffs @ np.ones(forms.n) >= 0
            Ku = forms.K @ p.coeffs
            assert np.linalg.norm(Ku - p.lam * forms.M @ p.coeffs) <= 1e-10 * np.linalg.norm(Ku)

    def test_too_small(self, square2):
        with pytest.raises(ValueError):
            solve_coarse(assemble(square2), 3)

    @pytest.mark.parametrize(
        "domain, reference", [(DomainSpec.unit_square(), 0.2400791), (DomainSpec.lshape(), 0.1829642)]
    )
    def test_fine_uniform_first_eigenvalue(self, domain, reference):
        forms = assemble(generate_uniform(domain, np.sqrt(2.0) / 256))
        lam = solve_coarse(forms, 2).pair(1).lam
        assert lam >= reference
        assert lam - reference < 2e-6

    def test_cluster(self):
        # unit square: the diagonal split breaks the x/y symmetry only at O(h²)
        forms = assemble(generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / 8))
        basis = solve_coarse(forms, 4)
        assert basis.cluster(2, gap=1e-8)[0] == [2]
        members, mean = basis.cluster(2, gap=0.1)
        assert members == [2, 3]
        assert np.isclose(mean, basis.lambdas[1:3].mean())

    def test_shift_invert_picks_nearest(self, small_problems):
        _, _, forms = small_problems[-1]
        lam, _ = dense_eigenpairs(forms)
        p = shift_invert_eigs(forms, lam[3] * (1 + 1e-3))
        assert abs(p.lam - lam[3]) <= 1e-10 * lam[3]


class TestRayleigh:
    def test_ratio(self):
        forms = FormPair(2 * np.eye(2), np.eye(2))
        u = np.array([np.sqrt(2.0), 0.0])
        assert rayleigh_quotient(forms, u) == pytest.approx(2.0, rel=1e-15)

    def test_eigenpair(self, small_problems):
        _, _, forms = small_problems[-2]
        for p in solve_coarse(forms, 3):
            assert abs(rayleigh_quotient(forms, p.coeffs) - p.lam) <= 1e-13 * p.lam
            assert abs(1 / forms.b(p.coeffs) - p.lam) <= 1e-11 * p.lam

    def test_boundary_null(self, square8):
        forms = assemble(square8)
        u = np.zeros(9)
        u[np.argmin(np.abs(square8.vertices - 0.5).sum(axis=1))] = 1.0
        with pytest.raises(BoundaryNullError):
            rayleigh_quotient(forms, u)

    @pytest.mark.parametrize("seed", range(10))
    def test_error_identity(self, small_problems, seed):
        rng = np.random.default_rng(seed)
        usable = [forms for _, _, forms in small_problems if forms.n >= 20]
        forms = usable[seed % len(usable)]
        k = 1 + seed % 3
        pair = solve_coarse(forms, 4).pair(k)
        u = pair.coeffs * rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 3.0)
        v = rng.standard_normal(forms.n) * rng.uniform(0.01, 1.0) + u
        lhs = rayleigh_quotient(forms, v) - pair.lam
        rhs = (forms.a(v - u) - pair.lam * forms.b(v - u)) / forms.b(v)
        assert abs(lhs - rhs) <= 1e-11 * max(abs(lhs), pair.lam)


class TestShiftedStep:
    def test_eigenvector_is_fixed_point(self, small_problems):
        _, _, forms = small_problems[-1]
        basis = solve_coarse(forms, 4)
        for k in (1, 2, 4):
            p = basis.pair(k)
            q = shifted_inverse_step(forms, p.lam * 1.01 + 1e-3, p.coeffs)
            assert abs(abs(forms.a(q.coeffs, p.coeffs)) - 1) <= 1e-12
            assert abs(q.lam - p.lam) <= 1e-12 * p.lam

    def test_exactly_one_solve(self, small_problems):
        from steklov_afem.linalg import factor_shifted

        _, _, forms = small_problems[-1]
        p = solve_coarse(forms, 2).pair(1)
        fact = factor_shifted(forms.K, forms.M, p.lam * 1.1)
        shifted_inverse_step(forms, p.lam * 1.1, np.ones(forms.n), factor=fact)
        assert fact.n_solves == 1

    def test_contraction_bound(self):
        forms = assemble(generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / 4))
        assert 20 <= forms.n <= 30
        lam, U = dense_basis(forms)
        mu = 1.0 / lam
        rng = np.random.default_rng(3)
        checked = 0
        for k in range(1, 6):
            cols = eigenspace(lam, k)
            rho = np.min(np.abs(np.delete(mu, cols) - mu[k - 1]))
            for _ in range(40):
                u0 = U[:, k - 1] + 10 ** rng.uniform(-6, -1.5) * rng.standard_normal(forms.n)
                u0 /= forms.a_norm(u0)
                mu0 = mu[k - 1] + rng.uniform(-0.2, 0.2) * rho
                d0 = a_dist(forms, U, cols, u0)
                if d0 > 0.5:
                    continue
                step = shifted_inverse_step(forms, 1.0 / mu0, u0)
                bound = 4.0 / rho * max(abs(mu0 - mu[j]) for j in cols) * d0
                assert a_dist(forms, U, cols, step.coeffs) <= bound
                checked += 1
        assert checked > 150

    def test_prolonged_start_lands_in_fine_eigenspace(self, small_problems):
        worst = 0.0
        for name, mesh, _ in small_problems:
            for times in (1, 2):
                chain = refine_chain(mesh, times)
                fine = chain[-1]
                if fine.n_vertices > 200 or mesh.n_vertices < 5:
                    continue
                coarse_pair = solve_coarse(assemble(mesh), 2).pair(1)
                forms = assemble(fine)
                step = shifted_inverse_step(forms, coarse_pair.lam, prolong_chain(chain, coarse_pair.coeffs))
                lam, U = dense_basis(forms)
                worst = max(worst, a_dist(forms, U, eigenspace(lam, 1), step.coeffs))
        assert worst <= 1e-8

    def test_degenerate_start(self, square8):
        forms = assemble(square8)
        u = np.zeros(9)
        u[np.argmin(np.abs(square8.vertices - 0.5).sum(axis=1))] = 1.0
        with pytest.raises(DegenerateStartError):
            shifted_inverse_step(forms, 0.3, u)
        with pytest.raises(DegenerateStartError):
            inverse_step(forms, u)


class TestInverseStep:
    def test_first_eigenvector_fixed(self, small_problems):
        _, _, forms = small_problems[-1]
        p = solve_coarse(forms, 2).pair(1)
        q = inverse_step(forms, p.coeffs)
        assert abs(q.lam - p.lam) <= 1e-12 * p.lam
        assert abs(forms.a(q.coeffs, p.coeffs) - 1) <= 1e-12

    def test_contaminated_second_drifts_to_first(self, small_problems):
        _, _, forms = small_problems[-1]
        basis = solve_coarse(forms, 3)
        u = basis.pair(2).coeffs + 0.01 * basis.pair(1).coeffs
        lams = []
        for _ in range(60):
            p = inverse_step(forms, u)
            u = p.coeffs
            lams.append(p.lam)
        assert lams[0] > 0.9 * basis.pair(2).lam
        assert abs(lams[-1] - basis.pair(1).lam) <= 1e-10


class TestProlong:
    def test_constant_and_linear(self, square8):
        fine = bisect(square8, [0, 5])
        assert np.allclose(prolong(square8, fine, np.full(9, 3.0)), 3.0)
        lin = square8.vertices.sum(axis=1)
        assert np.allclose(prolong(square8, fine, lin), fine.vertices.sum(axis=1), rtol=0, atol=1e-15)

    def test_energy_preserved(self, square8):
        mid = bisect(square8, [2])
        fine = bisect(mid, [0, 1, 7])
        rng = np.random.default_rng(0)
        u = rng.standard_normal(9)
        v = prolong(mid, fine, prolong(square8, mid, u))
        fc, ff = assemble(square8), assemble(fine)
        assert abs(fc.a(u) - ff.a(v)) <= 1e-13 * fc.a(u)
        assert abs(fc.b(u) - ff.b(v)) <= 1e-13 * fc.b(u)

    def test_composed_uniform_refinement(self, square8):
        fine = uniform_refine(square8, 3)
        assert fine.is_refinement_of(square8)
        lin = 2 * square8.vertices[:, 0] - square8.vertices[:, 1]
        assert np.allclose(prolong(square8, fine, lin), 2 * fine.vertices[:, 0] - fine.vertices[:, 1], atol=1e-15)

    def test_not_nested(self, square8, square2):
        with pytest.raises(StructuralError):
            prolong(square2, square8, np.ones(4))


class TestMonotone:
    @pytest.mark.parametrize("domain", [DomainSpec.unit_square(), DomainSpec.lshape()])
    def test_uniform_refinement_from_above(self, domain):
        refs = {"square": [0.24007909, 1.49230397], "lshape": [0.18296424, 0.89364690]}[domain.name]
        mesh = generate_uniform(domain, 0.25)
        prev = None
        for _ in range(8):
            lam = solve_coarse(assemble(mesh), 3).lambdas[:2]
            assert np.all(lam >= np.array(refs) - 1e-12)
            if prev is not None:
                assert np.all(lam <= prev + 1e-12)
            prev = lam
            mesh = uniform_refine(mesh, 1)


class TestScheme1:
    def test_two_levels_match_direct(self):
        coarse = generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / 16)
        fine = uniform_refine(coarse, 2)
        pair = run_scheme_1(RunConfig(algorithm="scheme1", k=1), [coarse, fine])
        direct = solve_coarse(assemble(fine), 2).pair(1)
        assert fine.n_vertices == len(pair.coeffs)
        assert abs(pair.lam - direct.lam) <= 1e-9

    def test_one_level_is_coarse_solve(self):
        mesh = generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / 8)
        pair = run_scheme_1(RunConfig(k=2), [mesh])
        assert pair.lam == solve_coarse(assemble(mesh), 3).pair(2).lam

    def test_three_levels_improve(self):
        mesh = generate_uniform(DomainSpec.unit_square(), np.sqrt(2.0) / 4)
        chain = refine_chain(mesh, 4)
        ref = solve_coarse(assemble(uniform_refine(chain[-1], 2)), 2).pair(1).lam
        two = run_scheme_1(RunConfig(), chain[:3]).lam
        three = run_scheme_1(RunConfig(), chain).lam
        assert abs(three - ref) < abs(two - ref)
