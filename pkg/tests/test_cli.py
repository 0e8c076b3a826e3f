import math

import numpy as np
import pytest

from beltrami_lab import checkpoint
from beltrami_lab.cli import EXIT_CHECKS_FAILED, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main
from beltrami_lab.diagnostics import energy, parse_csv, read_column
from beltrami_lab.spectral import VOLUME


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


SMALL_DB = """
grid.n = 16
physics.nu = 0.05
physics.eta = 0.05
init.kind = double_beltrami
time.dt = 0.002
time.t_end = 0.02
time.record_every = 5
"""


class TestInit:
    def test_abc_energy(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "init.kind = abc\noutput.checkpoint_path = abc.ckpt")
        assert main(["init", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        st = checkpoint.read(tmp_path / "abc.ckpt")
        assert st.grid.n == 32
        assert abs(energy(st.u, st.B)[2] - 3 * VOLUME) <= 1e-8
        assert "energy =" in capsys.readouterr().out

    def test_derived_values_printed(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "grid.n = 16\ninit.kind = double_beltrami")
        assert main(["init", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "alpha = 1.30277" in out and "beta = -2.30277" in out

    def test_empty_shell(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "grid.n = 16\ninit.kind = shell\ninit.shell = 7")
        assert main(["init", "--config", cfg, "--output", str(tmp_path)]) == EXIT_USAGE
        assert "error" in capsys.readouterr().err

    def test_reproducible_bytes(self, tmp_path):
        cfg = write_cfg(tmp_path, "grid.n = 16\ninit.kind = double_beltrami")
        for d in ("a", "b"):
            assert main(["init", "--config", cfg, "--output", str(tmp_path / d), "--seed", "5"]) == EXIT_OK
        assert (tmp_path / "a" / "state.ckpt").read_bytes() == (tmp_path / "b" / "state.ckpt").read_bytes()

    def test_bad_config(self, tmp_path):
        cfg = write_cfg(tmp_path, "grid.size = 16")
        assert main(["init", "--config", cfg]) == EXIT_USAGE

    def test_no_command(self):
        assert main([]) == EXIT_USAGE


class TestSimulate:
    def test_zero_span(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB + "time.t_end = 0\n")
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        assert len(parse_csv((tmp_path / "run.csv").read_bytes())) == 1

    def test_csv_contents(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB)
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        data = (tmp_path / "run.csv").read_bytes()
        text = data.decode()
        assert "# time.dt = 0.002" in text and "# time.dt_source = fixed" in text
        assert "# derived.alpha = " in text
        recs = parse_csv(data)
        assert [r.t for r in recs] == pytest.approx([0.0, 0.01, 0.02])
        assert max(r.err_u for r in recs) < 1e-12
        assert all(r.phi_h12 < 1e-12 and r.psi_h12 < 1e-12 for r in recs)

    def test_auto_dt_echoed(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB + "time.dt = auto\n")
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        assert "# time.dt_source = auto" in (tmp_path / "run.csv").read_text()

    def test_deterministic_bytes(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB + "perturbation.enabled = true\n")
        for d in ("a", "b"):
            assert main(["simulate", "--config", cfg, "--output", str(tmp_path / d)]) == EXIT_OK
        for name in ("run.csv", "state.ckpt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_restart_equivalence(self, tmp_path):
        base = SMALL_DB.replace("physics.eta = 0.05", "physics.eta = 0.02") + "perturbation.enabled = true\n"
        straight = write_cfg(tmp_path, base + "time.t_end = 0.04\n", "straight.cfg")
        first = write_cfg(tmp_path, base, "first.cfg")
        assert main(["simulate", "--config", straight, "--output", str(tmp_path / "s")]) == EXIT_OK
        assert main(["simulate", "--config", first, "--output", str(tmp_path / "r")]) == EXIT_OK
        mid = tmp_path / "r" / "state.ckpt"
        second = write_cfg(
            tmp_path,
            base + f"time.t_end = 0.04\ninit.kind = checkpoint\ninit.path = {mid}\n"
            "perturbation.enabled = false\noutput.checkpoint_path = end.ckpt\n",
            "second.cfg",
        )
        assert main(["simulate", "--config", second, "--output", str(tmp_path / "r")]) == EXIT_OK
        a = checkpoint.read(tmp_path / "s" / "state.ckpt")
        b = checkpoint.read(tmp_path / "r" / "end.ckpt")
        assert a.t == b.t
        assert np.array_equal(a.u.coeffs, b.u.coeffs) and np.array_equal(a.B.coeffs, b.B.coeffs)

    def test_periodic_checkpoints(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB + "output.checkpoint_every = 5\n")
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        assert (tmp_path / "state_00000005.ckpt").exists() and (tmp_path / "state_00000010.ckpt").exists()

    def test_oversized_dt(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB + "time.dt = 0.5\ntime.t_end = 1\n")
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == EXIT_NUMERICAL
        assert (tmp_path / "run.csv").exists()


class TestVerify:
    def test_unknown_suite(self, capsys):
        assert main(["verify", "nonsense"]) == EXIT_USAGE

    def test_algebra(self, capsys):
        assert main(["verify", "algebra"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "FAIL" not in out and "algebra: PASS" in out

    @pytest.mark.slow
    def test_exact_negative_control(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "grid.n = 16\ntime.dt = 0.002\ntime.t_end = 0.1\n")
        code = main(["verify", "exact", "--config", cfg, "--reference-nu", "0.06"])
        out = capsys.readouterr().out
        assert code == EXIT_CHECKS_FAILED
        assert "FAIL exact.distinct_u" in out


class TestMinimize:
    def test_woltjer(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "grid.n = 16\nminimize.mode = woltjer")
        assert main(["minimize", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        text = (tmp_path / "minimize.csv").read_text()
        assert "woltjer" in text
        st, b_only = checkpoint.decode((tmp_path / "state.ckpt").read_bytes())
        assert b_only
        assert "converged = true" in capsys.readouterr().out

    def test_zero_target(self, tmp_path):
        cfg = write_cfg(tmp_path, "grid.n = 16\nminimize.h1 = 0")
        assert main(["minimize", "--config", cfg, "--output", str(tmp_path)]) == EXIT_USAGE

    def test_infeasible(self, tmp_path):
        cfg = write_cfg(
            tmp_path,
            "grid.n = 16\nminimize.mode = fixed_omega\nminimize.omega_amplitude = 0\nminimize.h2 = 100",
        )
        assert main(["minimize", "--config", cfg, "--output", str(tmp_path)]) == EXIT_INFEASIBLE


class TestDecayFit:
    def synthetic(self, tmp_path, count):
        t = np.linspace(0, 10, count)
        rows = "\n".join(f"{float(x)!r},{math.exp(-0.3 * x)!r}" for x in t)
        path = tmp_path / "d.csv"
        path.write_text("# synthetic\nt,E_u\n" + rows + "\n")
        return str(path)

    def test_rate(self, tmp_path, capsys):
        assert main(["decay-fit", self.synthetic(tmp_path, 50)]) == EXIT_OK
        rate = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("rate"))
        assert float(rate.split("=")[1]) == pytest.approx(0.3, rel=1e-10)

    def test_too_few(self, tmp_path):
        assert main(["decay-fit", self.synthetic(tmp_path, 8)]) == EXIT_USAGE

    def test_missing_column(self, tmp_path):
        assert main(["decay-fit", self.synthetic(tmp_path, 50), "--column", "E_B"]) == EXIT_USAGE

    def test_simulate_output(self, tmp_path):
        cfg = write_cfg(tmp_path, SMALL_DB + "time.t_end = 0.1\ntime.record_every = 2\n")
        assert main(["simulate", "--config", cfg, "--output", str(tmp_path)]) == EXIT_OK
        t, e = read_column((tmp_path / "run.csv").read_bytes(), "E_u")
        assert len(t) == 26
        assert main(["decay-fit", str(tmp_path / "run.csv")]) == EXIT_OK
