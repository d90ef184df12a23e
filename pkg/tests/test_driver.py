import numpy as np
import pytest

from stiefel_landing.driver import (
    IterTrace,
    SolverConfig,
    Status,
    Variant,
    alg_stopping_metric,
    first_order_landing_solve,
    safe_step_size,
    sol_step,
    solve,
    stopping_metric,
)
from stiefel_landing.errors import NotInSafeRegionError
from stiefel_landing.fields import riemannian_gradient
from stiefel_landing.geometry import AmbientPoint, frob, project_tangent
from stiefel_landing.krylov import forcing_tolerance
from stiefel_landing.newton_schulz import ns_update
from stiefel_landing.problems import (
    haar_stiefel,
    pca_problem,
    procrustes_problem,
    synth_pca,
    synth_procrustes,
)

from conftest import loglog_slope, point_with_feasibility, random_tangent


@pytest.fixture(scope="module")
def desk_procrustes():
    data, _ = synth_procrustes(200, 20, 0.02, seed=1)
    prob = procrustes_problem(data)
    x0 = haar_stiefel(20, 20, np.random.default_rng(10))
    warm = first_order_landing_solve(
        prob, x0, SolverConfig(variant=Variant.FIRST_ORDER, mxit=20000), 1e-2
    )
    assert warm.status is Status.CONVERGED
    return prob, warm.X_final


class TestSolverConfig:
    def test_defaults_match_reporting_protocol(self):
        cfg = SolverConfig()
        assert cfg.tol == 1e-12
        assert cfg.mxit == 200
        assert cfg.eps == 0.5
        assert cfg.lam == 0.5
        assert cfg.zeta_max == 0.1
        assert cfg.theta == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0.0)
        with pytest.raises(ValueError):
            SolverConfig(eps=1.5)
        with pytest.raises(ValueError):
            SolverConfig(stopping="nope")

    def test_variant_coercion(self):
        assert SolverConfig(variant="sol-sym").variant is Variant.SOL_SYM


class TestSafeStepSize:
    def test_reference_value(self, rng):
        # d = 0, eps = 0.25, g = 1: sqrt(0.25) / 1 = 0.5
        pt = AmbientPoint(haar_stiefel(8, 3, rng))
        lam = random_tangent(rng, pt)
        lam *= 1.0 / frob(lam)
        assert safe_step_size(pt, lam, 0.25) == pytest.approx(0.5, abs=1e-8)

    def test_unit_step_when_direction_small(self, rng):
        pt = AmbientPoint(haar_stiefel(8, 3, rng))
        lam = random_tangent(rng, pt)
        lam *= 0.5 * np.sqrt(0.25) / frob(lam)  # g <= sqrt(eps)
        assert safe_step_size(pt, lam, 0.25) == 1.0

    def test_zero_direction(self, rng):
        pt = AmbientPoint(haar_stiefel(8, 3, rng))
        assert safe_step_size(pt, np.zeros((8, 3)), 0.3) == 1.0

    def test_precondition(self, rng):
        pt = point_with_feasibility(rng, 8, 3, 0.4)
        with pytest.raises(NotInSafeRegionError):
            safe_step_size(pt, np.ones((8, 3)), 0.2)

    def test_monte_carlo_region_preservation(self, rng):
        # Landing-structured directions (tangent plus the order-1 update)
        # stepped with the rule stay in the region.
        for _ in range(200):
            eps = rng.uniform(0.05, 0.95)
            pt = point_with_feasibility(rng, 10, 4, rng.uniform(0.0, eps))
            lam = random_tangent(rng, pt, scale=rng.uniform(0.0, 5.0)) + ns_update(pt, 1).V
            eta = safe_step_size(pt, lam, eps)
            assert 0.0 < eta <= 1.0
            stepped = AmbientPoint(pt.X + eta * lam)
            assert stepped.feas_norm <= eps + 1e-12


class TestStoppingMetrics:
    def test_zero_at_stationary_point(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.SOL))
        assert stopping_metric(prob, res.X_final) <= 1e-12

    def test_gradient_only_on_manifold(self, rng, desk_procrustes):
        prob, _ = desk_procrustes
        pt = AmbientPoint(haar_stiefel(20, 20, rng))
        gn = riemannian_gradient(prob, pt).norm
        assert stopping_metric(prob, pt) == pytest.approx(gn, rel=1e-12)

    def test_alg_variant_uses_normal_update(self, rng, desk_procrustes):
        prob, _ = desk_procrustes
        pt = point_with_feasibility(rng, 20, 20, 0.2)
        expected = riemannian_gradient(prob, pt).norm + ns_update(pt, 1).norm
        assert alg_stopping_metric(prob, pt) == pytest.approx(expected, rel=1e-12)


class TestSolStep:
    def test_fixed_point(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.SOL))
        xstar = res.X_final
        stepped, trace = sol_step(prob, xstar, SolverConfig(variant=Variant.SOL))
        assert frob(stepped.X - xstar.X) <= 1e-11

    def test_rejects_unsafe_point(self, rng, desk_procrustes):
        prob, _ = desk_procrustes
        pt = point_with_feasibility(rng, 20, 20, 0.7)
        with pytest.raises(NotInSafeRegionError):
            sol_step(prob, pt, SolverConfig(variant=Variant.SOL, eps=0.5))

    def test_one_step_quadratic_error_map(self, rng, desk_procrustes):
        prob, warm = desk_procrustes
        cfg = SolverConfig(variant=Variant.SOL)
        ref = solve(prob, warm, cfg)
        xstar = ref.X_final
        e0s = [1e-2, 1e-3, 1e-4, 1e-5]
        e1s = []
        for e0 in e0s:
            d = rng.standard_normal(xstar.X.shape)
            d /= frob(d)
            stepped, _ = sol_step(prob, AmbientPoint(xstar.X + e0 * d), cfg)
            e1s.append(frob(stepped.X - xstar.X))
        assert loglog_slope(e0s, e1s) >= 1.8

    def test_normal_only_step_contracts_quadratically(self, rng):
        # Disable the tangent component (stationary objective): feasibility
        # after the step is bounded by the square of the previous value.
        from conftest import random_quadratic_problem

        for _ in range(10):
            feas = rng.uniform(0.01, 0.45)
            pt = point_with_feasibility(rng, 10, 4, feas)
            stepped = AmbientPoint(pt.X + ns_update(pt, 1).V)
            assert stepped.feas_norm <= feas**2 + 1e-14


class TestSolve:
    def test_zero_iterations_at_optimum(self, desk_procrustes):
        prob, warm = desk_procrustes
        cfg = SolverConfig(variant=Variant.SOL)
        first = solve(prob, warm, cfg)
        again = solve(prob, first.X_final, cfg)
        assert again.status is Status.CONVERGED
        assert len(again.traces) == 1  # only the initial row

    def test_rejects_unsafe_start(self, rng, desk_procrustes):
        prob, _ = desk_procrustes
        pt = point_with_feasibility(rng, 20, 20, 0.9)
        with pytest.raises(NotInSafeRegionError):
            solve(prob, pt, SolverConfig(variant=Variant.SOL, eps=0.5))

    @pytest.mark.parametrize("variant", [Variant.SOL, Variant.SOL_SYM])
    def test_desk_convergence_within_budget(self, desk_procrustes, variant):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=variant))
        assert res.status is Status.CONVERGED
        assert len(res.traces) - 1 <= 15
        last = res.traces[-1]
        assert last.grad_norm + last.feas <= 1e-12
        assert last.feas <= 1e-12

    def test_traces_stay_in_safe_region(self, desk_procrustes):
        prob, warm = desk_procrustes
        cfg = SolverConfig(variant=Variant.SOL)
        res = solve(prob, warm, cfg)
        assert all(t.feas <= cfg.eps for t in res.traces)

    def test_forcing_compliance(self, desk_procrustes):
        prob, warm = desk_procrustes
        cfg = SolverConfig(variant=Variant.SOL)
        res = solve(prob, warm, cfg)
        for t in res.traces:
            if t.inner_iters == 0 or t.fallback:
                continue
            assert t.inner_residual <= t.inner_tol + 1e-300
            floor_active = t.inner_tol > forcing_tolerance(t.rhs_norm, cfg.zeta_max, cfg.theta)
            if not floor_active:
                assert t.inner_residual <= forcing_tolerance(t.rhs_norm, cfg.zeta_max, cfg.theta)

    def test_unit_step_active_in_local_regime(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.SOL))
        local = [
            t
            for prev, t in zip(res.traces[:-1], res.traces[1:])
            if prev.grad_norm + prev.feas < 1e-4
        ]
        assert local, "run never reached the local regime"
        unit = sum(1 for t in local if t.step_size == 1.0)
        assert unit >= 0.95 * len(local)

    def test_trace_row_count_and_initial_row(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.SOL))
        assert res.traces[0].iter == 0
        assert res.traces[0].step_size == 0.0
        assert [t.iter for t in res.traces] == list(range(len(res.traces)))

    def test_record_iterates(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.SOL, record_iterates=True))
        assert res.iterates is not None
        assert len(res.iterates) == len(res.traces)
        assert res.iterates[-1] is res.X_final


class TestKrylovDriftRegression:
    def test_no_spurious_excursion_near_convergence(self):
        # On this instance an unstabilized inner solve once returned a large
        # spurious tangent update at a nearly converged iterate (rhs ~1e-9,
        # solution norm ~1e-2) because roundoff drift into the ambient
        # near-kernel of the operator canceled under the residual check.
        # With tangent-projected matvecs the run converges directly.
        data, _ = synth_procrustes(200, 20, 0.02, seed=99)
        prob = procrustes_problem(data)
        x0 = haar_stiefel(20, 20, np.random.default_rng([99, 7919]))
        warm = first_order_landing_solve(
            prob, x0, SolverConfig(variant=Variant.FIRST_ORDER, mxit=50000), 1e-2
        )
        for variant in (Variant.SOL, Variant.SOL_SYM):
            res = solve(prob, warm.X_final, SolverConfig(variant=variant, record_iterates=True))
            assert res.status is Status.CONVERGED
            assert len(res.traces) - 1 <= 15
            errs = [frob(x.X - res.X_final.X) for x in res.iterates[:-1] if
                    frob(x.X - res.X_final.X) > 1e-13]
            # Once the error dips below 1e-6 it must never grow again.
            small = [i for i, e in enumerate(errs) if e < 1e-6]
            if small:
                tail = errs[small[0]:]
                assert all(b <= a for a, b in zip(tail[:-1], tail[1:]))


class TestErrorOrderFits:
    def test_quadratic_order_procrustes(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.SOL, record_iterates=True))
        errs = [frob(x.X - res.X_final.X) for x in res.iterates[:-1]]
        errs = [e for e in errs if e > 1e-13]
        slope = loglog_slope(errs[:-1], errs[1:])
        assert slope >= 1.7

    def test_superlinear_inexact_order_pca(self):
        data = synth_pca(600, 120, 10, 0.1, seed=2)
        prob = pca_problem(data)
        x0 = haar_stiefel(120, 10, np.random.default_rng(20))
        warm = first_order_landing_solve(
            prob, x0, SolverConfig(variant=Variant.FIRST_ORDER, mxit=50000), 1e-2
        )
        res = solve(
            prob,
            warm.X_final,
            SolverConfig(variant=Variant.SOL, theta=0.5, record_iterates=True),
        )
        assert res.status is Status.CONVERGED
        errs = [frob(x.X - res.X_final.X) for x in res.iterates[:-1]]
        errs = [e for e in errs if e > 1e-13]
        slope = loglog_slope(errs[:-1], errs[1:])
        assert slope >= 1.35


class TestFirstOrderSolve:
    def test_zero_iterations_at_stationary_start(self, desk_procrustes):
        prob, warm = desk_procrustes
        ref = solve(prob, warm, SolverConfig(variant=Variant.SOL))
        res = first_order_landing_solve(prob, ref.X_final, SolverConfig(), 1e-2)
        assert res.status is Status.CONVERGED
        assert len(res.traces) == 1

    def test_reaches_warm_start_target(self):
        data, _ = synth_procrustes(80, 10, 0.02, seed=4)
        prob = procrustes_problem(data)
        x0 = haar_stiefel(10, 10, np.random.default_rng(40))
        res = first_order_landing_solve(
            prob, x0, SolverConfig(variant=Variant.FIRST_ORDER, mxit=20000), 1e-2
        )
        assert res.status is Status.CONVERGED
        assert res.traces[-1].grad_norm <= 1e-2

    def test_budget_exhaustion_returns_max_iter(self):
        data, _ = synth_procrustes(80, 10, 0.02, seed=4)
        prob = procrustes_problem(data)
        x0 = haar_stiefel(10, 10, np.random.default_rng(40))
        res = first_order_landing_solve(prob, x0, SolverConfig(mxit=3), 1e-9)
        assert res.status is Status.MAX_ITER
        assert len(res.traces) == 4

    def test_monotone_feasibility_decay(self, desk_procrustes):
        prob, warm = desk_procrustes
        res = solve(prob, warm, SolverConfig(variant=Variant.FIRST_ORDER, mxit=50))
        feas = [t.feas for t in res.traces]
        assert all(b <= a + 1e-15 for a, b in zip(feas[:-1], feas[1:]))
