"""Per-pole risk calculus: fire risk, fragility, topple risk, and cost metric.

Classification thresholds are deliberately user-supplied: no defensible
universal values exist, and the same three-way rule serves both the
accuracy/clearance-driven fire classifier and the fragility-driven topple
classifier. Note the threshold convention is shared verbatim between the two:
a value strictly above thresh_low is Low risk. For fragility that means
higher fragility maps to LOWER topple risk under this rule; supply thresholds
accordingly (see README) rather than expecting a silent sign flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

from .catalog import Material, PoleRecord
from .cloud import CorridorResult
from .depth import DepthEstimate
from .hough import InclinationResult

_WEIGHT_TOLERANCE = 1e-9

DEFAULT_MATERIAL_FACTORS = {
    Material.WOOD: 1.0,
    Material.COMPOSITE: 0.6,
    Material.STEEL: 0.3,
    Material.CONCRETE: 0.2,
    Material.UNKNOWN: 1.0,  # conservative: treat unknown like wood
}

FIRE_INPUT_MODES = ("clearance", "depth")


class RiskClass(IntEnum):
    LOW = 1
    MODERATE = 2
    HIGH = 3

    @property
    def label(self) -> str:
        return self.name.lower()


DEFAULT_CLASS_SCORES = {RiskClass.LOW: 1.0, RiskClass.MODERATE: 2.0, RiskClass.HIGH: 3.0}


@dataclass(frozen=True)
class RiskThresholds:
    thresh_low: float
    thresh_mod: float

    def __post_init__(self):
        if not self.thresh_low > self.thresh_mod:
            raise ValueError(
                f"thresh_low ({self.thresh_low}) must exceed thresh_mod ({self.thresh_mod})")


@dataclass(frozen=True)
class FragilityInput:
    tilt_deg: float           # deflection from vertical
    age_years: float
    material: Material
    wind_speed_ms: float

    def __post_init__(self):
        if not (0.0 <= self.tilt_deg <= 90.0):
            raise ValueError("tilt must lie in [0, 90] degrees")
        if self.age_years < 0.0:
            raise ValueError("age must be non-negative")
        if self.wind_speed_ms < 0.0:
            raise ValueError("wind speed must be non-negative")


@dataclass(frozen=True)
class FragilityWeights:
    """Normalized weighted-sum model with saturating per-factor normalizers."""

    w_tilt: float = 0.25
    w_age: float = 0.25
    w_material: float = 0.25
    w_wind: float = 0.25
    material_factor: dict[Material, float] = field(
        default_factory=lambda: dict(DEFAULT_MATERIAL_FACTORS))
    tilt_ref_deg: float = 10.0
    age_cap_years: float = 100.0
    wind_ref_ms: float = 40.0

    def __post_init__(self):
        weights = (self.w_tilt, self.w_age, self.w_material, self.w_wind)
        if any(w < 0.0 for w in weights):
            raise ValueError("weights must be non-negative")
        if abs(sum(weights) - 1.0) > _WEIGHT_TOLERANCE:
            raise ValueError(f"weights must sum to 1, got {sum(weights)}")
        if min(self.tilt_ref_deg, self.age_cap_years, self.wind_ref_ms) <= 0.0:
            raise ValueError("normalizer references must be positive")


@dataclass(frozen=True)
class CostInput:
    implementation_cost: float
    fire_risk_score: float

    def __post_init__(self):
        if self.fire_risk_score <= 0.0:
            raise ValueError("fire risk score must be positive")


@dataclass(frozen=True)
class PoleRiskAssessment:
    """Combined per-pole record; a field is None when its stage did not run."""

    pole_id: str
    latitude: float
    longitude: float
    fire_risk: RiskClass | None = None
    topple_risk: RiskClass | None = None
    fragility: float | None = None
    clearance_m: float | None = None
    tilt_deg: float | None = None
    cost_metric: float | None = None


@dataclass(frozen=True)
class AssessmentConfig:
    """Everything assess_pole needs beyond the per-pole analysis outputs."""

    fire_thresholds: RiskThresholds | None = None
    topple_thresholds: RiskThresholds | None = None
    weights: FragilityWeights = field(default_factory=FragilityWeights)
    class_scores: dict[RiskClass, float] = field(
        default_factory=lambda: dict(DEFAULT_CLASS_SCORES))
    wind_speed_ms: float = 0.0
    fire_input: str = "clearance"
    implementation_cost: float | None = None

    def __post_init__(self):
        if self.fire_input not in FIRE_INPUT_MODES:
            raise ValueError(f"fire_input must be one of {FIRE_INPUT_MODES}")


def classify_by_thresholds(value: float, t: RiskThresholds) -> RiskClass:
    """Three-way rule: Low above thresh_low, High at or below thresh_mod.

    Boundaries are exact: value == thresh_low is Moderate, value ==
    thresh_mod is High. The branches are mutually exclusive and exhaustive.
    """
    if value > t.thresh_low:
        return RiskClass.LOW
    if value > t.thresh_mod:
        return RiskClass.MODERATE
    return RiskClass.HIGH


def fire_risk(accuracy: float, t: RiskThresholds) -> RiskClass:
    """Fire risk from a depth-accuracy reading in [0, 1]."""
    if not (0.0 <= accuracy <= 1.0):
        raise ValueError(f"accuracy {accuracy} outside [0, 1]")
    return classify_by_thresholds(accuracy, t)


def fragility(inputs: FragilityInput, w: FragilityWeights | None = None) -> float:
    """Weighted sum of saturating tilt, age, material, and wind factors.

    Each factor is clipped to [0, 1] before weighting, so the result is
    bounded in [0, 1] and monotone non-decreasing in every component.
    """
    w = w or FragilityWeights()
    if inputs.material not in w.material_factor:
        raise ValueError(f"no material factor configured for {inputs.material.value!r}")
    tilt_term = min(inputs.tilt_deg / w.tilt_ref_deg, 1.0)
    age_term = min(inputs.age_years / w.age_cap_years, 1.0)
    wind_term = min(inputs.wind_speed_ms / w.wind_ref_ms, 1.0)
    material_term = w.material_factor[inputs.material]
    if not (0.0 <= material_term <= 1.0):
        raise ValueError("material factors must lie in [0, 1]")
    return (w.w_tilt * tilt_term + w.w_age * age_term
            + w.w_material * material_term + w.w_wind * wind_term)


def topple_risk(fragility_value: float, t: RiskThresholds) -> RiskClass:
    """Topple risk from a fragility value in [0, 1].

    Applies the same three-way rule as fire_risk, so a pole with fragility
    above thresh_low classifies as Low. Pick thresholds with that convention
    in mind.
    """
    if not (0.0 <= fragility_value <= 1.0):
        raise ValueError(f"fragility {fragility_value} outside [0, 1]")
    return classify_by_thresholds(fragility_value, t)


def risk_class_score(c: RiskClass, mapping: dict[RiskClass, float] | None = None) -> float:
    scores = mapping or DEFAULT_CLASS_SCORES
    if c not in scores:
        raise ValueError(f"no score configured for class {c.label}")
    return scores[c]


def cost_metric(cost: float, fire_risk_score: float) -> float:
    """Implementation cost per unit of fire risk; lower is better value."""
    if fire_risk_score <= 0.0:
        raise ValueError("fire risk score must be positive")
    return cost / fire_risk_score


def assess_pole(pole: PoleRecord,
                inclination: InclinationResult | None = None,
                corridor: CorridorResult | None = None,
                depth: DepthEstimate | None = None,
                config: AssessmentConfig | None = None,
                cloud_tilt_deg: float | None = None,
                clearance_m: float | None = None) -> PoleRiskAssessment:
    """Combine whichever analysis outputs exist into one risk record.

    Tilt prefers the 3-D corridor estimate over the single-image inclination
    stage; cloud_tilt_deg covers reconstructions where a pole was found but
    no vegetation (tilt without a corridor). clearance_m stands in for a
    corridor when the caller already has the scalar. Fire risk is driven by
    clearance or relative depth depending on config.fire_input; stages
    without inputs leave their fields None.
    """
    if (inclination is None and corridor is None and depth is None
            and cloud_tilt_deg is None and clearance_m is None):
        raise ValueError(f"no analysis inputs for pole {pole.pole_id!r}")
    config = config or AssessmentConfig()

    tilt: float | None = None
    if corridor is not None and corridor.tilt_deg is not None:
        tilt = corridor.tilt_deg
    elif cloud_tilt_deg is not None:
        tilt = cloud_tilt_deg
    elif inclination is not None:
        tilt = inclination.deflection_deg

    clearance = corridor.clearance_m if corridor is not None else clearance_m

    frag: float | None = None
    topple: RiskClass | None = None
    if tilt is not None and config.topple_thresholds is not None:
        frag = fragility(
            FragilityInput(tilt_deg=tilt,
                           age_years=pole.age_years or 0.0,
                           material=pole.material,
                           wind_speed_ms=config.wind_speed_ms),
            config.weights)
        topple = topple_risk(frag, config.topple_thresholds)

    fire: RiskClass | None = None
    fire_value = clearance if config.fire_input == "clearance" else (
        depth.relative_depth if depth is not None else None)
    if fire_value is not None and config.fire_thresholds is not None:
        fire = classify_by_thresholds(fire_value, config.fire_thresholds)

    cost: float | None = None
    if fire is not None and config.implementation_cost is not None:
        cost = cost_metric(config.implementation_cost,
                           risk_class_score(fire, config.class_scores))

    return PoleRiskAssessment(
        pole_id=pole.pole_id, latitude=pole.latitude, longitude=pole.longitude,
        fire_risk=fire, topple_risk=topple, fragility=frag,
        clearance_m=clearance, tilt_deg=tilt, cost_metric=cost)
