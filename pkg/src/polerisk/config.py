"""Run configuration: line-oriented `key = value` file with sections.

Fire and topple thresholds are mandatory; everything else has a sensible
default. Example:

    [fire_thresholds]
    low = 10.0
    mod = 3.0

    [topple_thresholds]
    low = 0.8
    mod = 0.4

    [fragility_weights]
    tilt = 0.25
    age = 0.25
    material = 0.25
    wind = 0.25
    tilt_ref_deg = 10
    age_cap_years = 100
    wind_ref_ms = 40

    [material_factors]
    wood = 1.0

    [class_scores]
    low = 1
    moderate = 2
    high = 3

    [pipeline]
    wind_speed_ms = 12.0
    fire_input = clearance
    eps_m = 0.35
    min_pts = 8
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .cloud import ClassifierConfig, EPS_DEFAULT, MIN_PTS_DEFAULT, UP_DEFAULT
from .catalog import Material
from .hough import (MAX_CANDIDATE_DEFLECTION, NMS_WINDOW_DEFAULT,
                    RHO_RES_DEFAULT, THETA_RES_DEFAULT)
from .risk import (AssessmentConfig, DEFAULT_CLASS_SCORES,
                   DEFAULT_MATERIAL_FACTORS, FragilityWeights, RiskClass,
                   RiskThresholds)


class ConfigError(ValueError):
    """Missing or malformed run configuration."""


@dataclass(frozen=True)
class PipelineConfig:
    """Assessment settings plus stage tuning knobs for the batch pipeline."""

    assessment: AssessmentConfig
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    eps_m: float = EPS_DEFAULT
    min_pts: int = MIN_PTS_DEFAULT
    scale_m_per_unit: float = 1.0
    up: tuple[float, float, float] = UP_DEFAULT
    theta_res_deg: float = THETA_RES_DEFAULT
    rho_res_px: float = RHO_RES_DEFAULT
    nms_window: tuple[int, int] = NMS_WINDOW_DEFAULT
    max_peaks: int = 8
    min_votes_fraction: float = 0.3   # of the ROI crop height
    roi_margin_px: int = 10
    max_candidate_deflection_deg: float = MAX_CANDIDATE_DEFLECTION
    depth_statistic: str = "median"
    jobs: int = 1

    def snapshot(self) -> dict:
        """Flat, JSON-friendly view used for run provenance."""
        out: dict = {}
        for f in dc_fields(self):
            value = getattr(self, f.name)
            if f.name == "assessment":
                out["fire_thresholds"] = (
                    None if value.fire_thresholds is None
                    else [value.fire_thresholds.thresh_low, value.fire_thresholds.thresh_mod])
                out["topple_thresholds"] = (
                    None if value.topple_thresholds is None
                    else [value.topple_thresholds.thresh_low, value.topple_thresholds.thresh_mod])
                out["fire_input"] = value.fire_input
                out["wind_speed_ms"] = value.wind_speed_ms
                out["implementation_cost"] = value.implementation_cost
            elif f.name == "classifier":
                out["classifier"] = {
                    "pole_linearity_min": value.pole_linearity_min,
                    "pole_verticality_min": value.pole_verticality_min,
                    "min_pole_height_m": value.min_pole_height_m,
                    "veg_linearity_max": value.veg_linearity_max,
                    "min_veg_points": value.min_veg_points,
                }
            else:
                out[f.name] = list(value) if isinstance(value, tuple) else value
        return out


def _thresholds(parser: configparser.ConfigParser, section: str) -> RiskThresholds:
    if not parser.has_section(section):
        raise ConfigError(f"missing mandatory section [{section}]")
    try:
        low = parser.getfloat(section, "low")
        mod = parser.getfloat(section, "mod")
    except (configparser.NoOptionError, ValueError) as exc:
        raise ConfigError(f"[{section}] needs numeric 'low' and 'mod': {exc}") from None
    try:
        return RiskThresholds(thresh_low=low, thresh_mod=mod)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _weights(parser: configparser.ConfigParser) -> FragilityWeights:
    section = "fragility_weights"
    kwargs = {}
    if parser.has_section(section):
        get = lambda key, default: parser.getfloat(section, key, fallback=default)
        kwargs = dict(
            w_tilt=get("tilt", 0.25), w_age=get("age", 0.25),
            w_material=get("material", 0.25), w_wind=get("wind", 0.25),
            tilt_ref_deg=get("tilt_ref_deg", 10.0),
            age_cap_years=get("age_cap_years", 100.0),
            wind_ref_ms=get("wind_ref_ms", 40.0))
    factors = dict(DEFAULT_MATERIAL_FACTORS)
    if parser.has_section("material_factors"):
        for name, value in parser.items("material_factors"):
            factors[Material.parse(name)] = float(value)
    try:
        return FragilityWeights(material_factor=factors, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def _class_scores(parser: configparser.ConfigParser) -> dict[RiskClass, float]:
    scores = dict(DEFAULT_CLASS_SCORES)
    if parser.has_section("class_scores"):
        for name, value in parser.items("class_scores"):
            try:
                scores[RiskClass[name.upper()]] = float(value)
            except KeyError:
                raise ConfigError(f"[class_scores] unknown class {name!r}") from None
    if any(v <= 0 for v in scores.values()):
        raise ConfigError("[class_scores] scores must be positive")
    return scores


def parse_config(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}") from None

    assessment = AssessmentConfig(
        fire_thresholds=_thresholds(parser, "fire_thresholds"),
        topple_thresholds=_thresholds(parser, "topple_thresholds"),
        weights=_weights(parser),
        class_scores=_class_scores(parser),
        wind_speed_ms=parser.getfloat("pipeline", "wind_speed_ms", fallback=0.0),
        fire_input=parser.get("pipeline", "fire_input", fallback="clearance"),
        implementation_cost=(
            parser.getfloat("pipeline", "implementation_cost")
            if parser.has_option("pipeline", "implementation_cost") else None))

    classifier = ClassifierConfig(
        pole_linearity_min=parser.getfloat("classifier", "pole_linearity_min", fallback=0.85),
        pole_verticality_min=parser.getfloat("classifier", "pole_verticality_min", fallback=0.9),
        min_pole_height_m=parser.getfloat("classifier", "min_pole_height_m", fallback=4.0),
        veg_linearity_max=parser.getfloat("classifier", "veg_linearity_max", fallback=0.5),
        min_veg_points=parser.getint("classifier", "min_veg_points", fallback=50),
    ) if parser.has_section("classifier") else ClassifierConfig()

    pipe = "pipeline"
    up_text = parser.get(pipe, "up", fallback="0,0,1")
    try:
        up = tuple(float(v) for v in up_text.split(","))
    except ValueError:
        raise ConfigError(f"[pipeline] bad up vector {up_text!r}") from None
    if len(up) != 3:
        raise ConfigError("[pipeline] up vector needs 3 components")

    try:
        return PipelineConfig(
            assessment=assessment,
            classifier=classifier,
            eps_m=parser.getfloat(pipe, "eps_m", fallback=EPS_DEFAULT),
            min_pts=parser.getint(pipe, "min_pts", fallback=MIN_PTS_DEFAULT),
            scale_m_per_unit=parser.getfloat(pipe, "scale_m_per_unit", fallback=1.0),
            up=up,
            theta_res_deg=parser.getfloat(pipe, "theta_res_deg", fallback=THETA_RES_DEFAULT),
            rho_res_px=parser.getfloat(pipe, "rho_res_px", fallback=RHO_RES_DEFAULT),
            max_peaks=parser.getint(pipe, "max_peaks", fallback=8),
            min_votes_fraction=parser.getfloat(pipe, "min_votes_fraction", fallback=0.3),
            roi_margin_px=parser.getint(pipe, "roi_margin_px", fallback=10),
            max_candidate_deflection_deg=parser.getfloat(
                pipe, "max_candidate_deflection_deg", fallback=MAX_CANDIDATE_DEFLECTION),
            depth_statistic=parser.get(pipe, "depth_statistic", fallback="median"),
            jobs=parser.getint(pipe, "jobs", fallback=1))
    except ValueError as exc:
        raise ConfigError(f"bad pipeline setting: {exc}") from None


def load_config(path: str | Path) -> PipelineConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
