import math
import warnings

import pytest

from beltrami_lab.diagnostics import magnetic_helicity, magneto_vorticity_helicity
from beltrami_lab.fields import DoubleBeltramiSpec, random_double_beltrami
from beltrami_lab.spectral import VOLUME, SpectralVectorField, curl_hat, inner, shell_energies
from beltrami_lab.variational import (
    ConstraintTarget,
    InfeasibleTargets,
    NotConverged,
    helicity_gradients,
    measured_targets,
    minimize_fixed_omega,
    minimize_full,
    minimize_woltjer,
)
from beltrami_lab.verify import fixed_omega_oracle, smooth_state

H1 = 3.0 * VOLUME


class TestTargets:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(h1=0.0),
            dict(h1=math.nan),
            dict(h1=1.0, mode="other"),
            dict(h1=1.0, mode="full"),
            dict(h1=1.0, h2=0.0, mode="fixed_omega"),
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            ConstraintTarget(**kwargs)

    def test_valid(self):
        assert ConstraintTarget(1.0, 2.0, "full").h2 == 2.0


class TestGradients:
    def test_against_central_differences(self, grid16):
        u, B = smooth_state(grid16, 1)
        gB1, gB2, gu2 = helicity_gradients(u, B)
        eps = 1e-4
        for i in range(20):
            du, dB = smooth_state(grid16, 100 + i)
            fd_b1 = (magnetic_helicity(B + dB * eps) - magnetic_helicity(B - dB * eps)) / (2 * eps)
            fd_b2 = (magneto_vorticity_helicity(u, B + dB * eps) - magneto_vorticity_helicity(u, B - dB * eps)) / (2 * eps)
            fd_u2 = (magneto_vorticity_helicity(u + du * eps, B) - magneto_vorticity_helicity(u - du * eps, B)) / (2 * eps)
            for fd, g, d in ((fd_b1, gB1, dB), (fd_b2, gB2, dB), (fd_u2, gu2, du)):
                assert inner(g, d) == pytest.approx(fd, rel=1e-6, abs=1e-6)


class TestWoltjer:
    def test_minimum_on_unit_shell(self, grid16):
        res = minimize_woltjer(H1, grid16, seed=0)
        assert res.converged
        assert res.energy == pytest.approx(H1, rel=1e-10)
        assert res.multipliers[0] == pytest.approx(1.0, rel=1e-6)
        energies = shell_energies(res.B)
        assert energies[(1, 1)] / sum(energies.values()) >= 1 - 1e-8

    def test_negative_helicity(self, grid16):
        res = minimize_woltjer(-H1, grid16, seed=1)
        assert res.converged
        energies = shell_energies(res.B)
        assert energies[(1, -1)] / sum(energies.values()) >= 1 - 1e-8
        assert magnetic_helicity(res.B) == pytest.approx(-H1, rel=1e-8)

    def test_seed_invariant_energy(self, grid16):
        energies = [minimize_woltjer(H1, grid16, seed=s).energy for s in range(3)]
        assert max(energies) - min(energies) <= 1e-9 * H1

    def test_history_non_increasing(self, grid16):
        hist = minimize_woltjer(H1, grid16, seed=2).energy_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(hist[1:], hist[2:]))

    def test_zero_target(self, grid16):
        with pytest.raises(ValueError):
            minimize_woltjer(0.0, grid16)

    def test_not_converged_warning(self, grid16):
        with pytest.warns(NotConverged):
            res = minimize_woltjer(H1, grid16, seed=0, max_iter=1)
        assert not res.converged


class TestFixedOmega:
    def test_zero_omega_reduces_to_woltjer(self, grid16):
        res = minimize_fixed_omega(SpectralVectorField.zeros(grid16), H1, H1, grid16, seed=0)
        assert res.converged
        assert res.energy == pytest.approx(minimize_woltjer(H1, grid16).energy, rel=1e-9)

    def test_zero_omega_infeasible(self, grid16):
        with pytest.raises(InfeasibleTargets):
            minimize_fixed_omega(SpectralVectorField.zeros(grid16), H1, 2 * H1, grid16)

    def test_oracle_targets(self, grid16):
        u, B = fixed_omega_oracle(grid16, 0)
        h1, h2 = measured_targets(u, B)
        res = minimize_fixed_omega(curl_hat(u), h1, h2, grid16, seed=0)
        assert res.converged
        assert res.kkt_residual <= 1e-6
        assert max(res.constraint_residuals) <= 1e-8
        assert res.energy <= inner(B, B) + 1e-6

    def test_mean_omega_rejected(self, grid16):
        omega = SpectralVectorField.constant(grid16, (1.0, 0.0, 0.0))
        with pytest.raises(ValueError):
            minimize_fixed_omega(omega, H1, H1, grid16)


class TestFull:
    def test_double_beltrami_is_critical(self, grid16):
        spec = DoubleBeltramiSpec.from_shells(1, 1, 4, -1)
        db = random_double_beltrami(grid16, spec.shell1, spec.shell2, seed=0)
        h1, h2 = measured_targets(db.u, db.B)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            res = minimize_full(h1, h2, grid16, initial=(db.u, db.B), max_iter=0)
        assert max(res.kkt_residuals) <= 1e-8
        assert max(res.constraint_residuals) <= 1e-8
        assert res.multipliers[0] == pytest.approx(spec.beta, rel=1e-8)
        assert res.multipliers[1] == pytest.approx(1 / spec.alpha, rel=1e-8)

    def test_zero_h2(self, grid16):
        with pytest.raises(ValueError):
            minimize_full(H1, 0.0, grid16)

    @pytest.mark.slow
    def test_random_start_history(self, grid16):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            res = minimize_full(H1, 2 * H1, grid16, seed=0, max_iter=300)
        hist = res.energy_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(hist[1:], hist[2:]))
        assert max(res.constraint_residuals) <= 1e-8
