import math

import numpy as np
import pytest

from beltrami_lab import checkpoint
from beltrami_lab.diagnostics import energy, magnetic_helicity
from beltrami_lab.dynamics import (
    BlowupDetected,
    ExactSolution,
    PhysicalParams,
    SimState,
    StabilityBoundViolated,
    compare_to_exact,
    exact_at,
    fit_decay_rate,
    hall_rhs,
    run,
    run_adaptive,
    stability_dt,
    step,
)
from beltrami_lab.fields import DoubleBeltramiSpec, Shell, abc_flow, random_double_beltrami, shell_field
from beltrami_lab.spectral import SpectralVectorField, curl_hat, l2_norm
from beltrami_lab.verify import smooth_state


def db_state(grid, shells=(1, 1, 4, -1), seed=0, amp=0.1):
    spec = DoubleBeltramiSpec.from_shells(*shells)
    return random_double_beltrami(grid, spec.shell1, spec.shell2, seed=seed, amp1=amp, amp2=amp)


class TestParams:
    @pytest.mark.parametrize("bad", [dict(nu=-1.0, eta=0.0), dict(nu=math.nan, eta=0.0), dict(nu=0.0, eta=math.inf)])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            PhysicalParams(**bad)

    def test_ideal(self):
        assert PhysicalParams(0.0, 0.0).ideal
        assert not PhysicalParams(0.0, 1e-3).ideal


class TestRhs:
    def test_double_beltrami_is_steady_when_ideal(self, grid16):
        db = db_state(grid16)
        du, dB = hall_rhs(SimState(0.0, db.u, db.B, PhysicalParams(0.0, 0.0)))
        scale = l2_norm(db.u) + l2_norm(db.B)
        assert l2_norm(du) < 1e-14 * scale and l2_norm(dB) < 1e-14 * scale

    def test_pure_diffusion_of_single_mode(self, grid16):
        u = shell_field(2, 1, grid16, seed=1)
        du, dB = hall_rhs(SimState(0.0, u, SpectralVectorField.zeros(grid16), PhysicalParams(0.1, 0.0)))
        assert l2_norm(du + u * 0.2) < 1e-14
        assert l2_norm(dB) == 0.0

    def test_tendencies_solenoidal_and_real(self, grid16):
        u, B = smooth_state(grid16, 3)
        du, dB = hall_rhs(SimState(0.0, u, B, PhysicalParams(0.01, 0.02)))
        for f in (du, dB):
            assert f.divergence_residual() < 1e-12
            assert f.reality_defect() < 1e-14


class TestClosedForms:
    def test_diffusion_exact_to_roundoff(self, grid16):
        u = shell_field(3, -1, grid16, seed=2)
        s = SimState(0.0, u, SpectralVectorField.zeros(grid16), PhysicalParams(0.05, 0.05))
        out = run(s, 1.0, 0.05, make_records=False, enforce_bound=False, nonlinear=False).state
        assert l2_norm(out.u - u * math.exp(-0.05 * 3)) < 1e-14 * l2_norm(u)

    def test_trkalian(self, grid16):
        u = abc_flow(0.2, 0.1, 0.15, 2, grid16)
        s = SimState(0.0, u, SpectralVectorField.zeros(grid16), PhysicalParams(0.05, 0.05))
        res = run(s, 0.5, 1e-2, 10, exact=ExactSolution.trkalian(u, 2.0, 0.05))
        assert max(r.err_u for r in res.records) < 1e-12

    def test_forcefree(self, grid16):
        B = shell_field(2, -1, grid16, seed=5) * 0.1
        s = SimState(0.0, SpectralVectorField.zeros(grid16), B, PhysicalParams(0.03, 0.03))
        ref = ExactSolution.mhd_forcefree(B, -math.sqrt(2), 0.03)
        res = run(s, 0.5, 5e-3, 10, exact=ref)
        assert max(r.err_B for r in res.records) < 1e-12

    def test_double_beltrami_distinct(self, grid16):
        db = db_state(grid16)
        params = PhysicalParams(0.05, 0.05)
        ref = ExactSolution.double_beltrami(db, params)
        res = run(SimState(0.0, db.u, db.B, params), 0.2, 1e-3, 50, exact=ref)
        assert max(max(r.err_u, r.err_B) for r in res.records) < 1e-12


class TestRun:
    def test_zero_span_single_record(self, grid16):
        db = db_state(grid16)
        res = run(SimState(0.0, db.u, db.B, PhysicalParams(0.01, 0.01)), 0.0, 1e-3)
        assert len(res.records) == 1 and res.steps == 0

    def test_long_cadence_start_and_end(self, grid16):
        db = db_state(grid16)
        res = run(SimState(0.0, db.u, db.B, PhysicalParams(0.01, 0.01)), 0.01, 1e-3, record_every=1000)
        assert [r.t for r in res.records] == [0.0, pytest.approx(0.01)]
        assert res.steps == 10

    def test_deterministic(self, grid16):
        u, B = smooth_state(grid16, 1)
        s = SimState(0.0, u, B, PhysicalParams(0.01, 0.02))
        a = run(s, 0.05, 1e-3, make_records=False).state
        b = run(s, 0.05, 1e-3, make_records=False).state
        assert np.array_equal(a.u.coeffs, b.u.coeffs) and np.array_equal(a.B.coeffs, b.B.coeffs)

    def test_restart_is_bit_consistent(self, grid16, tmp_path):
        u, B = smooth_state(grid16, 2)
        s = SimState(0.0, u, B, PhysicalParams(0.01, 0.02))
        straight = run(s, 0.04, 1e-3, make_records=False).state
        half = run(s, 0.02, 1e-3, make_records=False).state
        checkpoint.write(tmp_path / "mid.ckpt", half)
        resumed = run(checkpoint.read(tmp_path / "mid.ckpt"), 0.04, 1e-3, make_records=False).state
        assert np.array_equal(straight.u.coeffs, resumed.u.coeffs)
        assert np.array_equal(straight.B.coeffs, resumed.B.coeffs)

    def test_nan_raises_blowup(self, grid16):
        u, B = smooth_state(grid16, 0)
        c = u.coeffs.copy()
        c[0, 1, 0, 0] = c[0, -1, 0, 0] = np.nan
        with pytest.raises(BlowupDetected) as info:
            step(SimState(0.0, SpectralVectorField(grid16, c), B, PhysicalParams(0.0, 0.0)), 1e-3)
        assert info.value.t == pytest.approx(1e-3)

    def test_bound_enforced(self, grid16):
        u, B = smooth_state(grid16, 0)
        s = SimState(0.0, u, B, PhysicalParams(0.0, 0.0))
        with pytest.raises(StabilityBoundViolated):
            run(s, 1.0, 2 * stability_dt(s))

    def test_invariants_maintained(self, grid16):
        u, B = smooth_state(grid16, 4)
        B = B + SpectralVectorField.constant(grid16, (0.0, 0.1, 0.0))
        s = SimState(0.0, u, B, PhysicalParams(0.01, 0.02))
        out = run(s, 0.1, 1e-3, make_records=False).state
        for f in (out.u, out.B):
            assert f.divergence_residual() < 1e-12
            assert f.reality_defect() == 0.0
        assert np.array_equal(out.B.mean, B.mean)

    def test_rk4_self_convergence(self, grid16):
        u, B = smooth_state(grid16, 0, peak=1.0)
        s = SimState(0.0, u, B, PhysicalParams(0.01, 0.02))
        out = [run(s, 0.2, dt, make_records=False).state.B for dt in (0.002, 0.001, 0.0005)]
        ratio = l2_norm(out[0] - out[1]) / l2_norm(out[1] - out[2])
        assert 14.0 < ratio < 18.0

    def test_ideal_invariants(self, grid16):
        u, B = smooth_state(grid16, 5)
        s = SimState(0.0, u, B, PhysicalParams(0.0, 0.0))
        out = run(s, 0.2, 1e-3, make_records=False).state
        e0, e1 = energy(s.u, s.B)[2], energy(out.u, out.B)[2]
        assert abs(e1 - e0) <= 1e-8 * e0
        h0 = magnetic_helicity(s.B)
        assert abs(magnetic_helicity(out.B) - h0) <= 1e-8 * abs(h0)

    def test_adaptive_observer_stops(self, grid16):
        u, B = smooth_state(grid16, 0)
        seen = []
        out = run_adaptive(SimState(0.0, u, B, PhysicalParams(0.01, 0.01)), 10.0, chunk=5,
                           observer=lambda st: seen.append(st.t) or len(seen) == 3)
        assert len(seen) == 3 and out.t == seen[-1] < 10.0


class TestExactAt:
    def test_at_zero(self, grid16):
        db = db_state(grid16)
        u, B = exact_at(ExactSolution.double_beltrami(db, PhysicalParams(0.05, 0.05)), 0.0)
        assert l2_norm(u - db.u) == 0.0 and l2_norm(B - db.B) == 0.0

    def test_negative_time(self, grid16):
        u = shell_field(1, 1, grid16, seed=0)
        with pytest.raises(ValueError):
            exact_at(ExactSolution.trkalian(u, 1.0, 0.1), -1.0)

    def test_unequal_diffusivities_refused(self, grid16):
        with pytest.raises(ValueError):
            ExactSolution.double_beltrami(db_state(grid16), PhysicalParams(0.06, 0.04))

    def test_degenerate_reduces_to_trkalian(self, grid16):
        u0 = shell_field(4, 1, grid16, seed=1)
        deg = ExactSolution.degenerate(u0, u0, 2.0, 0.05)
        tr = ExactSolution.trkalian(u0, 2.0, 0.05)
        for t in (0.3, 2.0):
            assert l2_norm(exact_at(deg, t)[0] - exact_at(tr, t)[0]) < 1e-15

    def test_degenerate_corrector_term(self, grid16):
        # an off-shell part makes the corrector nonzero
        u0 = shell_field(4, 1, grid16, seed=1) + shell_field(1, 1, grid16, seed=2)
        sol = ExactSolution.degenerate(u0, u0, 2.0, 0.05)
        u, _ = exact_at(sol, 1.0)
        decay = math.exp(-0.05 * 4)
        expected = u0 * decay - (curl_hat(u0) - u0 * 2.0) * (2 * 0.05 * 2.0 * decay)
        assert l2_norm(u - expected) < 1e-15 * l2_norm(u0)

    def test_zero_eigenvalue_part_is_constant(self, grid16):
        db = random_double_beltrami(grid16, Shell(1, 1), Shell(0), seed=3)
        sol = ExactSolution.double_beltrami(db, PhysicalParams(0.05, 0.05))
        u, _ = exact_at(sol, 100.0)
        assert np.allclose(u.mean, db.u2.mean, rtol=0, atol=1e-15)

    def test_norm_identity(self, grid16):
        db = db_state(grid16)
        nu, t = 0.05, 0.7
        u, _ = exact_at(ExactSolution.double_beltrami(db, PhysicalParams(nu, nu)), t)
        d1, d2 = math.exp(-nu * db.spec.lambda1**2 * t), math.exp(-nu * db.spec.lambda2**2 * t)
        expected = math.hypot(d1 * l2_norm(db.u1), d2 * l2_norm(db.u2))
        assert l2_norm(u) == pytest.approx(expected, rel=1e-13)

    def test_compare_to_exact(self, grid16):
        db = db_state(grid16)
        params = PhysicalParams(0.05, 0.05)
        sol = ExactSolution.double_beltrami(db, params)
        assert compare_to_exact(SimState(0.0, db.u, db.B, params), sol) == (0.0, 0.0)
        eu, eb = compare_to_exact(SimState(0.0, db.u * 1.01, db.B, params), sol)
        assert eu == pytest.approx(0.01, rel=1e-12) and eb == 0.0


class TestDecayFit:
    def test_exponential(self):
        t = np.linspace(0, 5, 50)
        fit = fit_decay_rate(t, 3.0 * np.exp(-2.0 * t))
        assert fit.slope == pytest.approx(-2.0, abs=1e-8)
        assert fit.r2 == pytest.approx(1.0)

    def test_power(self):
        t = np.linspace(0, 100, 200)
        fit = fit_decay_rate(t, (1 + t) ** -0.75, kind="power")
        assert fit.slope == pytest.approx(-0.75, abs=1e-6)

    def test_window(self):
        t = np.linspace(0, 10, 101)
        v = np.where(t < 5, 1.0, np.exp(-(t - 5)))
        assert fit_decay_rate(t, v, window=(5, 10)).slope == pytest.approx(-1.0, abs=1e-10)

    def test_errors(self):
        t = np.arange(20.0)
        with pytest.raises(ValueError):
            fit_decay_rate(t[:5], np.ones(5))
        with pytest.raises(ValueError):
            fit_decay_rate(t, -np.ones(20))
        with pytest.raises(ValueError):
            fit_decay_rate(t, np.ones(20), kind="linear")
