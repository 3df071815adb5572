"""Glottis contour delineation for high-speed videoendoscopy.

The pipeline chains Canny edge detection, Lucas-Kanade optical flow, and
an iterative saliency network whose measure blends structural saliency
with a motion-saliency channel; the most salient closed curve per frame
is the glottis contour, and the per-frame areas form the glottal-area
waveform.
"""

from .contour import (
    GawSeries,
    GlottisResult,
    STATUS_NO_CURVE,
    STATUS_OK,
    STATUS_OPEN,
    build_gaw,
    dice,
    dominant_period,
    extract_contour,
    fill_polygon,
    polygon_area,
)
from .errors import (
    CapacityError,
    ContractError,
    DataError,
    FormatError,
    GlottalSaliencyError,
    InputError,
    NumericError,
    ParameterError,
    ShapeError,
    TopologyError,
)
from .flow import FlowParams, VelocityField, lk_velocity, normalize_velocity
from .imgproc import EdgeMap, Frame, canny_edges, gaussian_blur, to_grayscale
from .lattice import (
    Element,
    ElementLattice,
    MS_FORM_ADJACENT,
    MS_FORM_HEAD_ANCHORED,
    NetworkParams,
    attenuation_along,
    build_lattice,
    curvature_factor,
)
from .measures import (
    Curve,
    angular_distance,
    combined_measure,
    magnitude,
    ms_measure,
    spatial_distance,
    su_measure,
    validate_curve,
)
from .io_cli import (
    CONTOURS_SCHEMA,
    PipelineConfig,
    load_frames,
    main,
    parse_contours,
    run_pipeline,
    write_outputs,
)
from .solver import (
    BacktrackResult,
    SaliencyState,
    backtrack,
    brute_force_max,
    random_instance,
    run_dp,
)
from .synth import SynthSpec, TruthContour, boundary_points, generate, semi_axis_at, truth_mask

__version__ = "0.1.0"
