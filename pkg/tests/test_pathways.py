import math

import numpy as np
import pytest

from stepwork.errors import DensityFloor, EnumerationCap
from stepwork.pathways import (
    PathwayClass,
    decompose_free_energy,
    find_optimal_transitions,
    overlap_measure,
    pathway_work_distribution,
    residual_12a,
    residual_12b,
    residual_13,
    residual_quotient,
    total_pathway_distribution,
)
from stepwork.protocol import build_center_schedule, build_spring_schedule
from stepwork.workdist import (
    fluctuation_density,
    pushforward_step_density,
    run_work_recursion,
    step_work_map,
)


@pytest.fixture(scope="module")
def center_s3():
    return build_center_schedule(1.0, 3, 1.0, 3)


def _on_common_lattice(d1, d2, h):
    n1 = round(d1.grid.min / h)
    n2 = round(d2.grid.min / h)
    lo = min(n1, n2)
    hi = max(n1 + d1.values.size, n2 + d2.values.size)
    a = np.zeros(hi - lo)
    b = np.zeros(hi - lo)
    a[n1 - lo:n1 - lo + d1.values.size] = d1.values
    b[n2 - lo:n2 - lo + d2.values.size] = d2.values
    return a, b


class TestResiduals:
    def test_identical_states_no_work(self):
        sch = build_center_schedule(0.0, 3, 1.0, 3)  # null pull: dW = 0
        assert residual_12a(2, 0.3, 0.3, 1, 1, sch) == pytest.approx(0.0, abs=1e-13)

    def test_rigid_translation_gaussian_oracle(self, center_s3):
        # ground states translated with the trap: the density logs cancel and
        # the residual collapses to -a dlam (lambda_prev + 3 dlam/4 - u)
        sch = center_s3
        dlam = sch.increment
        for i in (2, 3):
            lam_prev = sch.controls[i - 2]
            for u in (-0.3, 0.0, 0.4):
                got = residual_12a(i, lam_prev / 2 + u, sch.controls[i - 1] / 2 + u,
                                   0, 0, sch)
                expected = -sch.beta * dlam * (lam_prev + 0.75 * dlam - u)
                assert got == pytest.approx(expected, rel=1e-10, abs=1e-12)

    def test_12b_same_position(self, center_s3):
        # equal positions leave only the work term
        sch = center_s3
        for x in (0.05, 0.3, 0.6):
            got = residual_12b(2, x, x, 0, sch)
            assert got == pytest.approx(-sch.beta * step_work_map(sch, 1, x), rel=1e-12)
        midpoint = sch.controls[0] + sch.increment / 2
        assert residual_12b(2, midpoint, midpoint, 0, sch) == pytest.approx(0.0, abs=1e-13)

    def test_12b_floor_fires_on_excited_state_node(self, center_s3):
        # lambda_2/2 = 0.25 is an exact node of the first excited state
        with pytest.raises(DensityFloor):
            residual_12b(2, 0.25, 0.25, 1, center_s3)

    def test_13_symmetric_zero(self):
        # degenerate steps, odd state: densities at +-x coincide
        sch = build_center_schedule(0.0, 3, 1.0, 3)
        assert residual_13(2, 0.3, -0.3, 1, 1, sch) == pytest.approx(0.0, abs=1e-13)

    def test_13_equals_quotient_in_degenerate_case(self):
        # dlam = 0 and x_prev = x_next: Eq-13-style and quotient residuals agree
        sch = build_center_schedule(0.0, 3, 1.0, 3)
        r13 = residual_13(2, 0.4, 0.4, 0, 2, sch)
        quo = residual_quotient(2, 0.4, 0, 2, sch)
        r12a = residual_12a(2, 0.4, 0.4, 0, 2, sch)
        r12b = residual_12b(2, 0.4, 0.4, 2, sch)
        assert r13 == pytest.approx(quo, rel=1e-12)
        assert r13 == pytest.approx(r12a - r12b, rel=1e-12)

    def test_density_floor_raised(self, center_s3):
        with pytest.raises(DensityFloor):
            residual_12a(2, -20.0, 0.0, 0, 0, center_s3)
        with pytest.raises(DensityFloor):
            residual_13(2, 0.0, 25.0, 0, 0, center_s3)

    def test_quotient_identity_on_random_tuples(self):
        # r12a - r12b equals the directly evaluated cross-ratio expression
        sch = build_center_schedule(1.0, 4, 1.0, 3)
        rng = np.random.default_rng(7)
        n_checked = 0
        while n_checked < 10_000:
            i = int(rng.integers(2, sch.s + 1))
            n_prev = int(rng.integers(0, sch.n_max + 1))
            n_next = int(rng.integers(0, sch.n_max + 1))
            x_prev = float(rng.uniform(-2.0, 2.5))
            x_next = float(rng.uniform(-2.0, 2.5))
            try:
                lhs = (residual_12a(i, x_prev, x_next, n_prev, n_next, sch)
                       - residual_12b(i, x_prev, x_next, n_next, sch))
                rhs = residual_quotient(i, x_prev, n_prev, n_next, sch)
            except DensityFloor:
                continue
            assert abs(lhs - rhs) < 1e-10
            n_checked += 1


class TestTransitionScan:
    def test_degenerate_diagonal_is_optimal(self):
        sch = build_center_schedule(0.0, 3, 1.0, 2)
        scan = find_optimal_transitions(sch, 2, tol=1e-9, max_x_points=60)
        diag = [r for r in scan.records
                if r.n_prev == r.n_next and r.x_prev == r.x_next]
        assert diag  # the whole diagonal satisfies every condition exactly
        assert all(r.label is PathwayClass.OPTIMAL for r in scan.records)

    def test_zero_tolerance_on_coarse_grid_is_empty(self, center_s3):
        scan = find_optimal_transitions(center_s3, 2, tol=1e-15, max_x_points=50)
        assert scan.records == ()

    def test_matches_concentrate_in_overlap_region(self, center_s3):
        # density centers sit at lambda_1/2 = 0 and lambda_2/2 = 0.25; optimal
        # ground-pair transitions live where both densities are significant
        sch = center_s3
        scan = find_optimal_transitions(sch, 2, tol=0.05, max_x_points=200)
        assert scan.records
        sigma_gs = 1.0 / math.sqrt(2.0)
        ground = [r for r in scan.records if (r.n_prev, r.n_next) == (0, 0)]
        assert ground
        for r in ground:
            for x in (r.x_prev, r.x_next):
                assert abs(x - 0.0) < 3 * sigma_gs
                assert abs(x - 0.25) < 3 * sigma_gs
        # density-weighted mean of all matches sits between the two peaks
        sp1, sp2 = sch.spectrum(1), sch.spectrum(2)
        w = np.array([sp1.prob_density(r.n_prev, r.x_prev)
                      * sp2.prob_density(r.n_next, r.x_next) for r in scan.records])
        xs = np.array([0.5 * (r.x_prev + r.x_next) for r in scan.records])
        sigma_th = math.sqrt(0.5 / math.tanh(sch.a))
        assert -sigma_th < np.average(xs, weights=w) < 0.25 + sigma_th

    def test_optimal_set_detailed_balance_forms_disagree(self, center_s3):
        # On the optimal set the QUOTIENT form of detailed balance is bounded
        # by construction (|r12a - r12b| <= 2 tol), while the cross-paired
        # form r13 evaluates the states at swapped positions and does NOT
        # vanish there; the disagreement is systematic and reported as such.
        tol = 0.05
        scan = find_optimal_transitions(center_s3, 2, tol=tol, max_x_points=400)
        assert scan.records
        quotient = np.array([abs(r.r12a - r.r12b) for r in scan.records])
        cross = np.array([abs(r.r13) for r in scan.records])
        assert np.all(quotient <= 2 * tol + 1e-12)
        assert np.median(cross) > 2 * tol  # genuinely different condition

    def test_pair_summaries_report_positive_sums(self, center_s3):
        scan = find_optimal_transitions(center_s3, 2, tol=0.1, max_x_points=200)
        assert scan.pairs
        for p in scan.pairs:
            assert p.count > 0
            assert p.p_forward > 0.0
            assert p.p_reverse > 0.0

    def test_detailed_balance_proxy_shrinks_under_refinement(self, center_s3):
        # finer grids + tighter tolerances drive ln(P->/P<-) - beta dE to zero
        ladder = ((100, 1.6), (200, 0.4), (400, 0.1), (800, 0.025))
        totals = []
        for pts, tol in ladder:
            scan = find_optimal_transitions(center_s3, 2, tol=tol, max_x_points=pts,
                                            match="detailed-balance")
            tot = sum(abs(p.proxy_residual) for p in scan.pairs
                      if (p.n_prev, p.n_next) in ((0, 1), (1, 0)))
            totals.append(tot)
        assert all(b < a for a, b in zip(totals, totals[1:]))


class TestOverlap:
    def test_identical_densities(self, center_s3):
        f = fluctuation_density(center_s3.spectrum(1), center_s3.a, center_s3.x_grid)
        width, mass = overlap_measure(f, f)
        assert mass == pytest.approx(1.0, abs=1e-9)
        assert width > 0

    def test_distant_gaussians_share_nothing(self):
        sch = build_center_schedule(40.0, 2, 50.0, 0, x_points=4001)
        f1 = fluctuation_density(sch.spectrum(1), sch.a, sch.x_grid)
        f2 = fluctuation_density(sch.spectrum(2), sch.a, sch.x_grid)
        _, mass = overlap_measure(f1, f2)
        assert mass < 1e-12

    def test_equal_width_gaussian_oracle(self):
        # ground-state densities dlam/2 apart with sigma = 1/sqrt(2):
        # overlap mass is erfc(d / (2 sigma sqrt(2))) = erfc(dlam / 4)
        sch = build_center_schedule(1.0, 3, 50.0, 0)
        f1 = fluctuation_density(sch.spectrum(1), sch.a, sch.x_grid)
        f2 = fluctuation_density(sch.spectrum(2), sch.a, sch.x_grid)
        _, mass = overlap_measure(f1, f2)
        assert mass == pytest.approx(math.erfc(sch.increment / 4.0), abs=1e-4)


class TestPathwayEnumeration:
    def test_caps_enforced(self):
        big_s = build_center_schedule(1.0, 5, 1.0, 3)
        with pytest.raises(EnumerationCap):
            pathway_work_distribution((0, 0, 0, 0), big_s)
        big_n = build_center_schedule(1.0, 3, 1.0, 6)
        with pytest.raises(EnumerationCap):
            total_pathway_distribution(big_n)
        with pytest.raises(EnumerationCap):
            decompose_free_energy(big_n)

    def test_single_step_path_is_weighted_pushforward(self):
        sch = build_center_schedule(1.0, 2, 1.0, 3)
        x = sch.x_grid.nodes()
        spec = sch.spectrum(1)
        weights = spec.boltzmann_weights(sch.a)
        z = np.trapezoid(weights @ spec.all_densities(x), dx=sch.x_grid.spacing)
        for n in range(sch.n_max + 1):
            rho = pathway_work_distribution((n,), sch)
            dens_n = spec.all_densities(x)[n] * weights[n] / z
            from stepwork.workdist import GriddedDensity
            ref = pushforward_step_density(
                GriddedDensity(sch.x_grid, dens_n), sch, 1)
            a, b = _on_common_lattice(rho, ref, sch.w_grid.spacing)
            assert np.allclose(a, b, atol=1e-12 * max(1.0, a.max()))

    def test_sum_over_paths_equals_recursion(self, center_s3):
        pipeline = run_work_recursion(center_s3).final
        total = total_pathway_distribution(center_s3).normalize()
        a, b = _on_common_lattice(pipeline, total, center_s3.w_grid.spacing)
        assert np.abs(a - b).max() <= 1e-6 * a.max()

    def test_ground_path_dominates_at_low_temperature(self):
        sch = build_center_schedule(1.0, 3, 16.0, 3)
        ground = pathway_work_distribution((0, 0), sch)
        total = total_pathway_distribution(sch)
        assert ground.integral() / total.integral() > 0.99


class TestDecomposition:
    def test_reconstruction_is_exact(self, center_s3):
        d = decompose_free_energy(center_s3, tol=0.05)
        assert d.reconstruction_error < 1e-9
        assert sum(d.counts.values()) == (center_s3.n_max + 1) ** 2 * 50 ** 2

    def test_huge_tolerance_makes_everything_optimal(self, center_s3):
        d = decompose_free_energy(center_s3, tol=1e9)
        total = d.contributions["total"]
        for key in ("stochastic", "deterministic", "optimal"):
            assert d.contributions[key] == pytest.approx(total, rel=1e-9)
        assert d.contributions["biased"] / total < 1e-8

    def test_biased_pathways_contribute_little_at_moderate_tolerance(self, center_s3):
        d = decompose_free_energy(center_s3, tol=2.0)
        assert d.contributions["biased"] / d.contributions["total"] < 0.10

    def test_biased_share_shrinks_with_tolerance(self, center_s3):
        fractions = [decompose_free_energy(center_s3, tol=t).contributions["biased"]
                     / decompose_free_energy(center_s3, tol=t).contributions["total"]
                     for t in (0.25, 1.0, 2.0)]
        assert fractions[0] > fractions[1] > fractions[2]

    def test_two_step_schedule_has_no_transitions(self):
        sch = build_center_schedule(1.0, 2, 1.0, 2)
        d = decompose_free_energy(sch)
        assert d.counts["optimal"] == sum(d.counts.values())
        assert d.reconstruction_error < 1e-12

    def test_spring_schedule_supported(self):
        sch = build_spring_schedule(1.3, 3, 0.5, 3)
        d = decompose_free_energy(sch, tol=0.5)
        assert d.reconstruction_error < 1e-9
        assert d.df_total > 0
