from __future__ import annotations

import csv
import math

import numpy as np
import pytest

from elastoalpha.errors import ConfigError
from elastoalpha.fem import build_box_mesh
from elastoalpha.runner.cli import run_cli
from elastoalpha.runner.config import config_from_text, load_config
from elastoalpha.runner.output import write_vtk
from elastoalpha.runner.scenarios import RULER_PEAK, get_scenario, ruler_schedule, scenario_catalog, twist_angle

REST = """scenario = tossed_ruler
[scenario]
load_scale = 0
[time]
t_f = 1e-5
[output]
stride = 3
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_minimal_file_resolves_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, "scenario = tossed_ruler\n"), echo_dir=tmp_path / "out")
        assert (cfg.material.E, cfg.material.nu, cfg.material.rho0) == (206e6, 0.3, 7800.0)
        assert cfg.adaptivity.tol == 0.1 and cfg.adaptivity.rho_tol == 0.9
        assert cfg.tol_min == pytest.approx(0.01)
        assert (tmp_path / "out" / "resolved_config.ini").exists()

    def test_echo_roundtrip(self):
        cfg = config_from_text("scenario = twisted_bar\n[adaptivity]\ntol = 0.05\n")
        again = config_from_text(cfg.to_text())
        assert again.to_text() == cfg.to_text()
        assert again.adaptivity.tol_min == pytest.approx(0.005)

    def test_tol_min_not_below_tol(self):
        with pytest.raises(ConfigError, match="tol_min"):
            config_from_text("scenario = tossed_ruler\n[adaptivity]\ntol = 0.1\ntol_min = 0.2\n")

    def test_unknown_scenario_lists_catalog(self):
        with pytest.raises(ConfigError, match="available: .*tossed_ruler"):
            config_from_text("scenario = nope\n")

    def test_unknown_key_line_number(self):
        with pytest.raises(ConfigError, match="line 3: unknown key 'colour'"):
            config_from_text("scenario = tossed_ruler\n[mesh]\ncolour = red\n")

    @pytest.mark.parametrize("text,pattern", [
        ("scenario = tossed_ruler\n[mesh\n", "line 2: malformed"),
        ("scenario = tossed_ruler\n[nope]\n", "unknown section"),
        ("scenario = tossed_ruler\n[time]\nt_f = 1\nt_f = 2\n", "line 4: duplicate"),
        ("scenario = tossed_ruler\n[time]\nt_f\n", "line 3: expected"),
        ("scenario = tossed_ruler\n[time]\nt_f = soon\n", "line 3: invalid value"),
        ("[time]\nt_f = 1\n", "missing scenario"),
        ("scenario = tossed_ruler\n[integrator]\nfamily = n2\nrho_b = 0.5\n", "beta"),
        ("scenario = tossed_ruler\n[material]\nnu = 0.5\n", "material.nu"),
    ])
    def test_rejections(self, text, pattern):
        with pytest.raises(ConfigError, match=pattern):
            config_from_text(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")


class TestCatalog:
    def test_five_scenarios(self):
        assert set(scenario_catalog()) == {"wave2d_mms", "hyper3d_mms", "twisted_bar", "tube_impact", "tossed_ruler"}

    def test_release_angle(self):
        assert twist_angle(0.25, 8 * math.pi, 0.25) == pytest.approx(2 * math.pi)
        assert twist_angle(1.0, 8 * math.pi, 0.25) == pytest.approx(2 * math.pi)

    def test_ruler_schedule(self):
        assert ruler_schedule(0.0025) == pytest.approx(1e8)
        assert ruler_schedule(0.005) == pytest.approx(RULER_PEAK)
        assert ruler_schedule(0.0075) == pytest.approx(1e8)
        assert ruler_schedule(0.011) == 0.0

    def test_wave_initial_velocity(self):
        setup = get_scenario("wave2d_mms").build()
        assert not setup.v0.any()

    @pytest.mark.parametrize("name", sorted(scenario_catalog()))
    def test_every_scenario_builds(self, name):
        setup = get_scenario(name).build()
        setup.mesh.check()
        assert setup.u0.size == setup.disc.ndof

    def test_ruler_dofs(self):
        cfg = config_from_text("scenario = tossed_ruler\n[mesh]\ndivisions = 50, 10, 1\n")
        assert get_scenario("tossed_ruler").build(cfg).disc.ndof == 3366


class TestVTK:
    def test_format(self, tmp_path):
        mesh = build_box_mesh((1.0, 1.0), (1, 1))
        p = write_vtk(tmp_path / "a.vtk", mesh, np.arange(4.0), np.zeros(4))
        lines = p.read_text().splitlines()
        assert lines[0] == "# vtk DataFile Version 3.0" and lines[2] == "ASCII"
        assert "CELLS 2 8" in lines and "CELL_TYPES 2" in lines
        assert lines.count("5") == 2
        assert "VECTORS displacement double" in lines and "VECTORS velocity double" in lines
        i = lines.index("VECTORS displacement double")
        assert lines[i + 4] == "3 0 0"


class TestCLI:
    def test_spectra(self, tmp_path, capsys):
        out = tmp_path / "s.csv"
        assert run_cli(["spectra", "--rho-b", "1", "--family", "n1", "--theta-max", "5", "-o", str(out)]) == 0
        rows = read_csv(out)[1:]
        first = next(float(t) for t, r in rows if float(r) > 1 + 1e-9)
        assert first == pytest.approx(4.0, abs=0.01)

    def test_run_rest_body(self, tmp_path):
        cfg = write(tmp_path, REST)
        assert run_cli(["run", str(cfg), "-o", str(tmp_path / "o")]) == 0
        rows = read_csv(tmp_path / "o" / "timeseries.csv")
        assert len(rows) == 1 + 1 + 10
        assert all(float(x) == 0.0 for r in rows[1:] for x in r[4:])
        snaps = sorted(p.name for p in (tmp_path / "o" / "vtk").iterdir())
        assert snaps == [f"snapshot_{k:06d}.vtk" for k in (0, 3, 6, 9)]
        assert (tmp_path / "o" / "resolved_config.ini").exists()

    def test_deterministic_csv(self, tmp_path):
        cfg = write(tmp_path, REST.replace("load_scale = 0", "load_scale = 1e-3").replace("1e-5", "2e-5"))
        outs = []
        for k in range(2):
            assert run_cli(["run", str(cfg), "-o", str(tmp_path / f"r{k}")]) == 0
            outs.append((tmp_path / f"r{k}" / "timeseries.csv").read_bytes())
        assert outs[0] == outs[1]
        assert len(outs[0].splitlines()) > 10

    def test_validate(self, tmp_path, capsys):
        assert run_cli(["validate", str(write(tmp_path, "scenario = twisted_bar\n"))]) == 0
        assert "ok" in capsys.readouterr().out

    def test_config_error_exit(self, tmp_path):
        assert run_cli(["validate", str(write(tmp_path, "scenario = nope\n"))]) == 1
        assert run_cli(["run", str(tmp_path / "missing.ini")]) == 1

    def test_divergence_exit(self, tmp_path):
        text = ("scenario = tossed_ruler\n[adaptivity]\nadaptive = false\ndt0 = 1e-3\nmax_rejections = 2\n"
                "[time]\nt_f = 0.01\n")
        assert run_cli(["run", str(write(tmp_path, text)), "-o", str(tmp_path / "o")]) == 2
        assert (tmp_path / "o" / "timeseries.csv").exists()

    def test_converge_wave(self, tmp_path, capsys):
        cfg = write(tmp_path, "scenario = wave2d_mms\n")
        assert run_cli(["converge", str(cfg), "--dts", "4e-3,2e-3,1e-3", "-o", str(tmp_path / "c.csv")]) == 0
        rows = read_csv(tmp_path / "c.csv")[1:]
        for r in rows[1:]:
            assert float(r[3]) == pytest.approx(2.0, abs=0.25)
            assert float(r[4]) == pytest.approx(2.0, abs=0.25)

    def test_converge_exact_requires_solution(self, tmp_path):
        cfg = write(tmp_path, "scenario = tossed_ruler\n")
        assert run_cli(["converge", str(cfg), "--dts", "1e-6,5e-7,2.5e-7", "--reference", "exact"]) == 1
