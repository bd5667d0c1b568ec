import json

import numpy as np
import pytest

from gzk.core.exceptions import ConfigError, SnapshotError
from gzk.models.schemas import ExperimentVerdict, GroundStateMetadata, Integrator, SimulationConfig, Verdict
from gzk.services.persistence import (
    HEADER, RunRecorder, parse_config, parse_config_text, read_manifest, read_sidecar, read_snapshot,
    read_table, serialize_config, write_config, write_sidecar, write_snapshot, write_verdict,
)
from gzk.services.spectral_core import Representation, to_spectral

MINIMAL = """
# unit soliton box
k = 2
nx = 64
ny = 64
Lx = 20.0
Ly = 20.0   # square
T = 1.0
dt = 0.001
"""


class TestSnapshots:

    def test_physical_roundtrip(self, tmp_path, gaussian):
        moved = gaussian.with_data(gaussian.data, time=0.75)
        back = read_snapshot(write_snapshot(tmp_path / "u.gzk", moved))
        assert back.representation is Representation.PHYSICAL
        assert back.grid == gaussian.grid
        assert back.time == 0.75
        np.testing.assert_array_equal(back.data, gaussian.data)

    def test_spectral_roundtrip(self, tmp_path, gaussian):
        spec = to_spectral(gaussian)
        back = read_snapshot(write_snapshot(tmp_path / "u.gzk", spec))
        assert back.representation is Representation.SPECTRAL
        np.testing.assert_array_equal(back.data, spec.data)

    def test_file_size(self, tmp_path, gaussian):
        path = write_snapshot(tmp_path / "u.gzk", gaussian)
        assert path.stat().st_size == HEADER.itemsize + 64 * 64 * 16

    def test_missing_file(self, tmp_path):
        with pytest.raises(SnapshotError):
            read_snapshot(tmp_path / "absent.gzk")

    def _corrupt(self, path, offset, payload):
        raw = bytearray(path.read_bytes())
        raw[offset:offset + len(payload)] = payload
        path.write_bytes(bytes(raw))

    def test_bad_magic(self, tmp_path, gaussian):
        path = write_snapshot(tmp_path / "u.gzk", gaussian)
        self._corrupt(path, 0, b"XXXX")
        with pytest.raises(SnapshotError, match="magic"):
            read_snapshot(path)

    def test_odd_dimension_in_header(self, tmp_path, gaussian):
        path = write_snapshot(tmp_path / "u.gzk", gaussian)
        self._corrupt(path, 4, np.int64(63).tobytes())
        with pytest.raises(SnapshotError, match="dimensions"):
            read_snapshot(path)

    def test_unknown_representation(self, tmp_path, gaussian):
        path = write_snapshot(tmp_path / "u.gzk", gaussian)
        self._corrupt(path, 44, np.int64(7).tobytes())
        with pytest.raises(SnapshotError, match="representation"):
            read_snapshot(path)

    def test_truncated_payload(self, tmp_path, gaussian):
        path = write_snapshot(tmp_path / "u.gzk", gaussian)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(SnapshotError, match="payload"):
            read_snapshot(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "u.gzk"
        path.write_bytes(b"GZK1")
        with pytest.raises(SnapshotError):
            read_snapshot(path)


class TestConfig:

    def test_minimal_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(MINIMAL)
        cfg = parse_config(path)
        assert cfg.k == 2 and cfg.nx == 64 and cfg.Ly == 20.0
        assert cfg.integrator is Integrator.IF_RK4
        assert cfg.dealias is True
        assert cfg.steps == 1000

    def test_serialization_is_stable(self, tmp_path):
        cfg = parse_config_text(MINIMAL + "integrator = etdrk4\ndealias = false\n")
        text = serialize_config(cfg)
        again = parse_config(write_config(tmp_path / "run.cfg", cfg))
        assert again == cfg
        assert serialize_config(again) == text

    @pytest.mark.parametrize("extra, match", [
        ("k = 0\n", "duplicate"),
        ("colour = red\n", "Unknown"),
        ("just words\n", "key = value"),
    ])
    def test_rejected_lines(self, extra, match):
        with pytest.raises(ConfigError, match=match):
            parse_config_text(MINIMAL + extra)

    def test_invalid_power(self):
        with pytest.raises(ConfigError, match="k"):
            parse_config_text(MINIMAL.replace("k = 2", "k = 0"))

    def test_odd_resolution(self):
        with pytest.raises(ConfigError, match="nx"):
            parse_config_text(MINIMAL.replace("nx = 64", "nx = 63"))

    def test_missing_key(self):
        with pytest.raises(ConfigError, match="dt") as err:
            parse_config_text(MINIMAL.replace("dt = 0.001", ""))
        assert err.value.details["missing"] == ["dt"]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.cfg")

    def test_dt_floor(self):
        with pytest.raises(ConfigError):
            parse_config_text(MINIMAL + "dt_min = 0.01\n")


class TestRecords:

    def test_sidecar_roundtrip(self, tmp_path):
        meta = GroundStateMetadata(k=2, c=1.0, residual=3e-12, mass=35.1, gradient_energy=35.1, potential=70.2)
        assert read_sidecar(write_sidecar(tmp_path / "gs.meta", meta)) == meta

    def test_malformed_sidecar(self, tmp_path):
        path = tmp_path / "gs.meta"
        path.write_text("k = two\n")
        with pytest.raises(ConfigError):
            read_sidecar(path)

    def test_verdict_files(self, tmp_path):
        verdict = ExperimentVerdict(
            experiment="scaling",
            verdict=Verdict.PASS,
            checks={"static_norm_law": True},
            tables={"static_ratios": [{"s": 0.0, "rel_error": 1e-14}, {"s": 1.0, "rel_error": 2e-14}]}
        )
        paths = write_verdict(tmp_path, verdict)
        assert [p.name for p in paths] == ["verdict.json", "static_ratios.csv"]
        assert ExperimentVerdict.model_validate_json(paths[0].read_text()) == verdict
        assert list(read_table(paths[1])["s"]) == [0.0, 1.0]

    def test_manifest(self, tmp_path):
        recorder = RunRecorder("evolve", {"integrator": Integrator.ETDRK4, "T": 1.0}, seed=5, out_dir=tmp_path)
        recorder.add(recorder.path("diagnostics.csv"))
        manifest = read_manifest(recorder.finish())
        assert manifest.command == "evolve"
        assert manifest.config == {"integrator": "etdrk4", "T": 1.0}
        assert manifest.seed == 5
        assert manifest.finished_at >= manifest.started_at
        assert manifest.outputs == [str(tmp_path / "diagnostics.csv")]
        assert json.loads((tmp_path / "manifest.json").read_text())["command"] == "evolve"
