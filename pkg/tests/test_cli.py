import numpy as np
import pytest

from spde import formats
from spde.cli import (EXIT_FAIL, EXIT_OK, EXIT_VALIDATION, cmd_fit, cmd_moments, cmd_report,
                      cmd_simulate, cmd_verify, main)
from spde.errors import ValidationError
from spde.kernels import homogeneous_solution
from storage import ArtifactStore, sha256_of


def _checksums(manifest):
    return {f.name: f.sha256 for f in manifest.files}


class TestSimulate:

    def test_zero_noise_field_equals_homogeneous_file(self, config_factory, store):
        config = config_factory(solver={"a": 0.0, "b": 0.0},
                                kernels={"init_family": "weierstrass"})
        sums = _checksums(cmd_simulate(config, store))
        assert sums["field.rsuf"] == sums["homogeneous.rsuf"]
        assert {"config.ini", "homogeneous.csv", "noise.rsns"} <= set(sums)

    def test_field_slices_csv_matches_field(self, config_factory, store):
        config = config_factory(solver={"a": 0.0, "b": 0.0},
                                kernels={"init_family": "weierstrass"})
        manifest = cmd_simulate(config, store)
        assert "field_slices.csv" in _checksums(manifest)
        path = store.path("field_slices.csv")
        assert path.read_text().splitlines()[0] == "t,x,u"
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        grid = config.build_grid()
        expected = homogeneous_solution(config.build_kernel(), config.build_init(grid), grid)
        # nt = 64 keeps every row
        assert data.shape == ((grid.nt + 1) * 65, 3)
        np.testing.assert_array_equal(data[:, 2], expected.w[:, grid.window].ravel())
        np.testing.assert_array_equal(np.unique(data[:, 0]), grid.t)

    def test_same_config_same_checksums(self, small_config, tmp_path):
        first = cmd_simulate(small_config, ArtifactStore(tmp_path / "a"))
        second = cmd_simulate(small_config, ArtifactStore(tmp_path / "b"))
        assert _checksums(first) == _checksums(second)
        assert first.config_hash == small_config.config_hash()

    def test_picard_writes_iterates_and_distances(self, config_factory, store):
        config = config_factory(solver={"scheme": "picard", "a": 0.5, "n_iters": 3})
        names = set(_checksums(cmd_simulate(config, store)))
        assert {"field_picard_1.rsuf", "field_picard_2.rsuf", "field_picard_3.rsuf",
                "distances.csv"} <= names
        assert "field.rsuf" not in names
        header, _ = formats.read_binary(store.path("field_picard_3.rsuf"))
        assert header.rows == config.grid.nt + 1


class TestMoments:

    def test_outputs_and_worker_independence(self, config_factory, tmp_path):
        serial = ArtifactStore(tmp_path / "w1")
        parallel = ArtifactStore(tmp_path / "w2")
        manifest, tables, fits, report = cmd_moments(config_factory(), serial)
        cmd_moments(config_factory(run={"workers": 2}), parallel)
        assert len(tables) == len(fits) == 4
        assert manifest.status in ("PASS", "FAIL")
        for name in ("moments.csv", "fits.csv", "config.ini"):
            assert serial.path(name).read_bytes() == parallel.path(name).read_bytes()
        assert "workers" not in serial.path("config.ini").read_text()
        assert {"moments.csv", "fits.csv", "report.txt", "report.json"} <= set(_checksums(manifest))

    def test_plots(self, config_factory, store):
        config = config_factory(run={"plots": True}, regularity={"directions": ["space"],
                                                                 "p_values": [2.0]})
        manifest, *_ = cmd_moments(config, store)
        assert "fit_space_p2.svg" in _checksums(manifest)

    def test_refit_from_csv(self, small_config, tmp_path):
        source = ArtifactStore(tmp_path / "src")
        _, _, fits, _ = cmd_moments(small_config, source)
        manifest, refits = cmd_fit(source.path("moments.csv"), ArtifactStore(tmp_path / "refit"))
        assert manifest.config_hash == sha256_of(source.path("moments.csv"))
        assert [f.direction for f in refits] == [f.direction for f in fits]
        np.testing.assert_allclose([f.slope for f in refits], [f.slope for f in fits])


class TestVerify:

    def test_kernels_suite_passes(self, small_config, store):
        manifest, report = cmd_verify(small_config, "kernels", store)
        assert report.status == "PASS", report.text()
        assert manifest.status == "PASS"
        assert "homogeneous_space" in report.details["kernels"]
        gaussian = report.details["kernels"]["gaussian_space"]
        assert all(v > 0 for v in gaussian["variance"])
        assert gaussian["fitted_exponent"] == pytest.approx(0.3, abs=0.05)
        assert any(c.name.startswith("Gaussian time increment") for c in report.checks)

    def test_picard_suite_fixed_point_and_recursion(self, small_config, store):
        _, report = cmd_verify(small_config, "picard", store)
        assert report.status == "PASS", report.text()
        assert len(report.details["picard"]["uniform_moment_bound"]) == 4

    def test_injected_recursion_ratio_diverges(self, small_config, store):
        _, report = cmd_verify(small_config, "picard", store, recursion_ratio=1.5)
        recursion = next(c for c in report.checks if c.name == "constant recursion stays bounded")
        assert not recursion.passed
        assert "divergence detected" in recursion.detail
        assert report.status == "FAIL"

    def test_unknown_suite(self, small_config, store):
        with pytest.raises(ValidationError):
            cmd_verify(small_config, "everything", store)


class TestReport:

    def test_summary_and_tamper_detection(self, small_config, store):
        cmd_simulate(small_config, store)
        assert cmd_report(store.root).startswith("simulate [OK]")
        store.path("noise.rsns").write_bytes(b"tampered")
        with pytest.raises(ValidationError):
            cmd_report(store.root)


class TestMain:

    def test_exit_codes(self, small_config, tmp_path):
        ini = tmp_path / "small.ini"
        ini.write_text(small_config.to_ini())
        out = tmp_path / "out"
        assert main(["verify", "kernels", "--config", str(ini), "--out", str(out)]) == EXIT_OK
        assert main(["verify", "picard", "--config", str(ini), "--out", str(out),
                     "--recursion-ratio", "2"]) == EXIT_FAIL
        assert main(["simulate", "--config", str(ini), "--override", "noise.H=0.7"]) \
            == EXIT_VALIDATION
        assert main(["moments", "--config", str(ini), "--paths", "8",
                     "--out", str(out)]) == EXIT_VALIDATION

    def test_override_recorded(self, small_config, tmp_path):
        ini = tmp_path / "small.ini"
        ini.write_text(small_config.to_ini())
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(ini), "--seed", "3", "--out", str(out)]) == 0
        manifest = ArtifactStore(out).load_manifest()
        assert manifest.overrides == ["run.seed=3"]
        assert manifest.seed == 3
