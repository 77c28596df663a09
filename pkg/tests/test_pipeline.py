import json

import numpy as np
import pytest

from polerisk.catalog import PoleRecord
from polerisk.config import parse_config
from polerisk.pipeline import (PipelineRun, emit_geojson, emit_summary,
                               run_pipeline)
from polerisk.risk import PoleRiskAssessment, RiskClass

from helpers import RISK_CONFIG_TEXT, write_pole_inputs


@pytest.fixture()
def config():
    return parse_config(RISK_CONFIG_TEXT)


def catalog_entry(pole_id, lat=37.7, lon=-122.4):
    return PoleRecord(pole_id=pole_id, latitude=lat, longitude=lon,
                      age_years=40.0)


def check_geojson_grammar(text):
    """Strict structural validation of the emitted map."""
    doc = json.loads(text)
    assert set(doc) == {"type", "features"}
    assert doc["type"] == "FeatureCollection"
    assert isinstance(doc["features"], list)
    for feature in doc["features"]:
        assert set(feature) == {"type", "geometry", "properties"}
        assert feature["type"] == "Feature"
        geometry = feature["geometry"]
        assert set(geometry) == {"type", "coordinates"}
        assert geometry["type"] == "Point"
        lon, lat = geometry["coordinates"]
        assert -180.0 <= lon <= 180.0
        assert -90.0 <= lat <= 90.0
        assert isinstance(feature["properties"], dict)
        assert "pole_id" in feature["properties"]
    return doc


class TestRunPipeline:
    def test_full_inputs_single_pole(self, tmp_path, config):
        rng = np.random.default_rng(0)
        write_pole_inputs(tmp_path / "P1", rng, deflection_deg=3.0,
                          veg_distance=4.0)
        run = run_pipeline([catalog_entry("P1")], tmp_path, config)
        assert run.failures == []
        assert len(run.assessments) == 1
        a = run.assessments[0]
        assert a.tilt_deg == pytest.approx(3.0, abs=0.5)
        assert a.clearance_m == pytest.approx(4.0 - 1.0 - 0.1, abs=0.3)
        assert a.fire_risk is RiskClass.HIGH  # ~2.9 m clearance is under thresh_mod 3.0
        assert a.topple_risk is not None
        assert a.fragility is not None
        assert a.cost_metric is not None

    def test_ply_only_pole(self, tmp_path, config):
        rng = np.random.default_rng(1)
        write_pole_inputs(tmp_path / "P1", rng, with_edges=False,
                          with_depth=False, deflection_deg=2.0)
        run = run_pipeline([catalog_entry("P1")], tmp_path, config)
        assert run.failures == []
        a = run.assessments[0]
        assert a.tilt_deg == pytest.approx(2.0, abs=0.5)
        assert a.clearance_m is not None
        assert a.fire_risk is not None

    def test_edges_only_pole(self, tmp_path, config):
        rng = np.random.default_rng(2)
        write_pole_inputs(tmp_path / "P1", rng, with_depth=False,
                          with_cloud=False, deflection_deg=1.0)
        run = run_pipeline([catalog_entry("P1")], tmp_path, config)
        a = run.assessments[0]
        assert a.tilt_deg == pytest.approx(1.0, abs=0.5)
        assert a.clearance_m is None
        assert a.fire_risk is None  # clearance-driven fire risk needs the cloud

    def test_missing_inputs_is_failure(self, tmp_path, config):
        run = run_pipeline([catalog_entry("P1")], tmp_path, config)
        assert run.assessments == []
        assert len(run.failures) == 1
        assert run.failures[0].pole_id == "P1"

    def test_empty_catalog(self, tmp_path, config):
        run = run_pipeline([], tmp_path, config)
        assert run.assessments == []
        assert run.failures == []

    def test_partition_invariant(self, tmp_path, config):
        rng = np.random.default_rng(3)
        write_pole_inputs(tmp_path / "P1", rng)
        write_pole_inputs(tmp_path / "P3", rng, with_edges=False,
                          with_depth=False)
        catalog = [catalog_entry("P1"), catalog_entry("P2"), catalog_entry("P3")]
        run = run_pipeline(catalog, tmp_path, config)
        assert len(run.assessments) + len(run.failures) == len(catalog)
        seen = {a.pole_id for a in run.assessments} | {f.pole_id for f in run.failures}
        assert seen == {"P1", "P2", "P3"}

    def test_corrupt_stage_becomes_warning_when_another_succeeds(
            self, tmp_path, config):
        rng = np.random.default_rng(4)
        write_pole_inputs(tmp_path / "P1", rng, with_depth=False)
        (tmp_path / "P1" / "cloud.ply").write_bytes(b"not a ply file")
        run = run_pipeline([catalog_entry("P1")], tmp_path, config)
        assert len(run.assessments) == 1  # edges still delivered a tilt
        assert run.failures == []
        assert any(w.stage == "cloud" for w in run.warnings)

    def test_deterministic_output(self, tmp_path, config):
        rng = np.random.default_rng(5)
        for pid in ("P1", "P2"):
            write_pole_inputs(tmp_path / pid, rng)
        catalog = [catalog_entry("P1"), catalog_entry("P2", lat=37.8)]
        first = emit_geojson(run_pipeline(catalog, tmp_path, config))
        second = emit_geojson(run_pipeline(catalog, tmp_path, config))
        assert first == second

    def test_parallel_jobs_match_serial(self, tmp_path, config):
        from dataclasses import replace
        rng = np.random.default_rng(6)
        catalog = []
        for i in range(4):
            write_pole_inputs(tmp_path / f"P{i}", rng)
            catalog.append(catalog_entry(f"P{i}", lat=30.0 + i))
        serial = emit_geojson(run_pipeline(catalog, tmp_path, config))
        parallel = emit_geojson(run_pipeline(catalog, tmp_path,
                                             replace(config, jobs=4)))
        assert serial == parallel

    def test_assessments_sorted_by_pole_id(self, tmp_path, config):
        rng = np.random.default_rng(7)
        for pid in ("B", "A", "C"):
            write_pole_inputs(tmp_path / pid, rng)
        run = run_pipeline([catalog_entry(p) for p in ("B", "A", "C")],
                           tmp_path, config)
        assert [a.pole_id for a in run.assessments] == ["A", "B", "C"]


def synthetic_run(assessments, failures=()):
    return PipelineRun(run_id="test", config_snapshot={},
                       assessments=list(assessments), failures=list(failures))


def assessment(pole_id="P1", **kwargs):
    defaults = dict(latitude=37.5, longitude=-122.25)
    defaults.update(kwargs)
    return PoleRiskAssessment(pole_id=pole_id, **defaults)


class TestEmitGeojson:
    def test_empty_run_exact_bytes(self):
        assert emit_geojson(synthetic_run([])) == (
            '{"type":"FeatureCollection","features":[]}')

    def test_single_pole_coordinate_order(self):
        text = emit_geojson(synthetic_run([assessment()]))
        doc = check_geojson_grammar(text)
        assert doc["features"][0]["geometry"]["coordinates"] == [-122.25, 37.5]

    def test_round_trip_preserves_properties(self):
        a = assessment(fire_risk=RiskClass.LOW, topple_risk=RiskClass.MODERATE,
                       fragility=0.625, clearance_m=12.25, tilt_deg=3.5,
                       cost_metric=1000.0)
        doc = check_geojson_grammar(emit_geojson(synthetic_run([a])))
        props = doc["features"][0]["properties"]
        assert props == {
            "clearance_m": 12.25, "cost_metric": 1000.0, "fire_risk": "low",
            "fragility": 0.625, "pole_id": "P1", "tilt_deg": 3.5,
            "topple_risk": "moderate"}

    def test_absent_fields_not_emitted(self):
        doc = check_geojson_grammar(emit_geojson(synthetic_run([assessment()])))
        assert doc["features"][0]["properties"] == {"pole_id": "P1"}

    def test_six_decimal_rounding(self):
        a = assessment(tilt_deg=1.23456789, fragility=0.1000000004)
        doc = json.loads(emit_geojson(synthetic_run([a])))
        props = doc["features"][0]["properties"]
        assert props["tilt_deg"] == 1.234568
        assert props["fragility"] == 0.1

    def test_property_keys_sorted(self):
        a = assessment(fire_risk=RiskClass.LOW, fragility=0.5, tilt_deg=1.0)
        text = emit_geojson(synthetic_run([a]))
        props = json.loads(text)["features"][0]["properties"]
        assert list(props) == sorted(props)


class TestEmitSummary:
    def parse_footer(self, text):
        footer = {}
        for line in text.splitlines():
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                footer[key] = value
        return footer

    def test_zero_deflection_run(self):
        run = synthetic_run([assessment(pole_id=f"P{i}", tilt_deg=0.0)
                             for i in range(3)])
        footer = self.parse_footer(emit_summary(run))
        assert footer["mean_deflection_deg"] == "0.0"
        assert footer["median_deflection_deg"] == "0.0"

    def test_mean_of_two_deflections(self):
        run = synthetic_run([assessment(pole_id="P1", tilt_deg=1.0),
                             assessment(pole_id="P2", tilt_deg=3.0)])
        footer = self.parse_footer(emit_summary(run))
        assert footer["mean_deflection_deg"] == "2.0"

    def test_footer_matches_row_recomputation(self):
        rng = np.random.default_rng(9)
        run = synthetic_run([
            assessment(pole_id=f"P{i:03d}", tilt_deg=float(rng.uniform(0, 10)),
                       fire_risk=RiskClass.LOW)
            for i in range(100)])
        text = emit_summary(run)
        rows = [line.split(",") for line in text.splitlines()
                if line and not line.startswith("#")][1:]
        tilts = [float(r[4]) for r in rows]
        footer = self.parse_footer(text)
        assert float(footer["mean_deflection_deg"]) == sum(tilts) / len(tilts)
        ordered = sorted(tilts)
        assert float(footer["median_deflection_deg"]) == (
            (ordered[49] + ordered[50]) / 2.0)
        assert footer["fire_risk_histogram"] == "low:100,moderate:0,high:0"

    def test_histogram_counts(self):
        run = synthetic_run([
            assessment(pole_id="P1", fire_risk=RiskClass.LOW,
                       topple_risk=RiskClass.HIGH),
            assessment(pole_id="P2", fire_risk=RiskClass.LOW),
            assessment(pole_id="P3", fire_risk=RiskClass.HIGH),
        ])
        footer = self.parse_footer(emit_summary(run))
        assert footer["fire_risk_histogram"] == "low:2,moderate:0,high:1"
        assert footer["topple_risk_histogram"] == "low:0,moderate:0,high:1"

    def test_counts_in_footer(self):
        from polerisk.pipeline import StageFailure
        run = synthetic_run([assessment()],
                            failures=[StageFailure("P9", "assess", "no inputs")])
        footer = self.parse_footer(emit_summary(run))
        assert footer["poles_assessed"] == "1"
        assert footer["poles_failed"] == "1"

    def test_header_row(self):
        text = emit_summary(synthetic_run([]))
        assert text.splitlines()[0] == (
            "pole_id,fire_risk,topple_risk,fragility,tilt_deg,clearance_m,cost_metric")
