"""Utility-pole risk assessment from street-side imagery artifacts.

Three independent measurement pipelines (2-D Hough inclination, monocular
depth proximity, 3-D point-cloud corridor analysis) feed a per-pole risk
calculus and machine-readable risk maps.
"""

from .catalog import (CaptureProfile, ImageAsset, Material, PoleRecord,
                      ViewRequest, build_view_requests, default_profiles,
                      fetch_views, parse_pole_catalog, serialize_pole_catalog)
from .cloud import (ClusterLabeling, ClusterRole, CorridorResult, Line3D,
                    SpatialIndex, analyze_cloud, build_spatial_index,
                    clearance_distance, cluster_features, classify_clusters,
                    dbscan, fit_pole_axis, tilt_from_vertical)
from .depth import (CalibrationFit, DepthAccuracyReport, DepthEstimate,
                    DepthMap, calibrate_depth, depth_accuracy, load_depth_map,
                    region_depth, relative_depth)
from .detection import (Detection, EvalReport, GroundTruth, average_precision,
                        iou, match_detections, mean_average_precision)
from .hough import (HoughAccumulator, HoughLine, InclinationResult,
                    aggregate_pole_inclination, extract_peaks,
                    hough_accumulate, inclination_angle, select_pole_line)
from .imaging import (BBox, EdgeMask, GradientField, GrayRaster, canny_edges,
                      crop_roi, sobel_gradients, to_grayscale)
from .pipeline import (PipelineRun, StageFailure, emit_geojson, emit_summary,
                       run_pipeline)
from .ply import PlyError, PointCloud, parse_ply, serialize_ply
from .risk import (AssessmentConfig, FragilityInput, FragilityWeights,
                   PoleRiskAssessment, RiskClass, RiskThresholds, assess_pole,
                   cost_metric, fire_risk, fragility, risk_class_score,
                   topple_risk)

__version__ = "0.1.0"
