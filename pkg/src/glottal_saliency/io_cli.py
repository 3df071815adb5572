"""Frame ingestion, pipeline orchestration, serialization, and the CLI.

Input is a directory (or glob) of numbered PNG/PGM frames whose
lexicographic order is the temporal order. Outputs are ``contours.json``
(schema in ``CONTOURS_SCHEMA``), ``gaw.csv``, and optional per-frame
overlay images and debug dumps. Every CLI flag can also be supplied
through an environment variable with the ``GLOTSAL_`` prefix
(``--rho-virtual`` becomes ``GLOTSAL_RHO_VIRTUAL``); explicit flags win.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from PIL import Image

from .contour import GawSeries, GlottisResult, STATUS_OK, build_gaw, extract_contour
from .errors import FormatError, GlottalSaliencyError, InputError, ParameterError
from .flow import FlowParams, lk_velocity, normalize_velocity
from .imgproc import Frame, canny_edges, gaussian_blur, to_grayscale
from .lattice import MS_FORM_ADJACENT, MS_FORM_HEAD_ANCHORED, NetworkParams, build_lattice
from .solver import brute_force_max, random_instance, run_dp
from .synth import SynthSpec, generate

ENV_PREFIX = "GLOTSAL_"

CONTOURS_SCHEMA = {
    "type": "object",
    "required": ["config", "frames"],
    "properties": {
        "config": {"type": "object"},
        "frames": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "status", "closed", "area_px2", "contour"],
                "properties": {
                    "index": {"type": "integer"},
                    "status": {"enum": ["ok", "open_curve", "no_salient_curve"]},
                    "closed": {"type": "boolean"},
                    "area_px2": {"type": "number"},
                    "contour": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "minItems": 2,
                            "maxItems": 2,
                            "items": {"type": "number"},
                        },
                    },
                },
            },
        },
    },
}


@dataclass
class PipelineConfig:
    input_pattern: str = ""
    output_dir: str = ""
    frame_start: int | None = None
    frame_stop: int | None = None
    fps: float = 4000.0
    parallelism: int = 1
    min_peak: float = 0.05
    overlays: bool = False
    dump_velocity: bool = False
    dump_saliency: bool = False
    dump_elements: bool = False
    canny_sigma: float = 1.4
    canny_low: float = 0.1
    canny_high: float = 0.25
    # frames are pre-smoothed by this sigma for velocity estimation only;
    # the permissive LK conditioning test otherwise passes noise-dominated
    # velocities on flat backgrounds, which corrupt the motion channel
    flow_blur_sigma: float = 1.0
    flow: FlowParams = field(default_factory=FlowParams)
    net: NetworkParams = field(default_factory=NetworkParams)

    def __post_init__(self):
        if self.parallelism < 1:
            raise ParameterError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.frame_start is not None and self.frame_stop is not None:
            if self.frame_stop <= self.frame_start:
                raise ParameterError("frame range is empty")


def _image_to_array(img: Image.Image, path: str) -> np.ndarray:
    if img.mode == "L":
        return np.asarray(img, dtype=np.uint8)
    if img.mode in ("I;16", "I;16B"):
        return np.asarray(img, dtype=np.uint16)
    if img.mode == "I":
        arr = np.asarray(img, dtype=np.int64)
        if arr.min() < 0 or arr.max() > 65535:
            raise FormatError(f"{path}: integer samples outside 16-bit range")
        return arr.astype(np.uint16)
    if img.mode == "RGB":
        return np.asarray(img, dtype=np.uint8)
    if img.mode == "RGBA":
        raise FormatError(f"{path}: unsupported channel count 4 (expected 1 or 3)")
    raise FormatError(f"{path}: unsupported image mode {img.mode!r}")


def load_frames(pattern: str, frame_range: tuple[int | None, int | None] | None = None) -> list[Frame]:
    """Load a frame sequence from a directory or glob pattern.

    Files are taken in lexicographic order; all frames must share one
    size and at least two frames are required (velocity needs pairs).
    """
    if os.path.isdir(pattern):
        paths = sorted(
            p
            for p in glob.glob(os.path.join(pattern, "*"))
            if p.lower().endswith((".png", ".pgm"))
        )
    else:
        paths = sorted(glob.glob(pattern))
    if frame_range is not None:
        start, stop = frame_range
        paths = paths[slice(start, stop)]
    if len(paths) < 2:
        raise InputError(
            f"need at least 2 frames, found {len(paths)} matching {pattern!r}"
        )

    frames = []
    shape = None
    first_path = None
    for i, path in enumerate(paths):
        with Image.open(path) as img:
            arr = _image_to_array(img, path)
        if shape is None:
            shape = arr.shape[:2]
            first_path = path
        elif arr.shape[:2] != shape:
            raise InputError(
                f"frame dimensions differ: {first_path} is {shape[1]}x{shape[0]} but "
                f"{path} is {arr.shape[1]}x{arr.shape[0]}"
            )
        frames.append(to_grayscale(arr, index=i))
    return frames


def _process_frame(frames: list[Frame], t: int, cfg: PipelineConfig):
    frame = frames[t]
    edges = canny_edges(frame, low=cfg.canny_low, high=cfg.canny_high, sigma=cfg.canny_sigma)
    lat = build_lattice(edges, cfg.net)
    a, b = (t, t + 1) if t < len(frames) - 1 else (len(frames) - 2, len(frames) - 1)
    fa, fb = frames[a], frames[b]
    if cfg.flow_blur_sigma > 0:
        fa = gaussian_blur(fa, cfg.flow_blur_sigma)
        fb = gaussian_blur(fb, cfg.flow_blur_sigma)
    velocity = normalize_velocity(lk_velocity(fa, fb, cfg.flow), cfg.flow.lambda1)
    state = run_dp(lat, velocity, cfg.net)
    result = extract_contour(state, lat, cfg.min_peak, frame_index=t)
    extras = None
    if cfg.dump_velocity or cfg.dump_saliency or cfg.dump_elements:
        extras = (velocity, state, lat)
    return result, extras


def run_pipeline(cfg: PipelineConfig) -> tuple[list[GlottisResult], GawSeries]:
    """Run the full per-frame pipeline and assemble the area waveform.

    Per-frame extraction failures become result statuses, never batch
    aborts; output is deterministic for a fixed config at any
    parallelism degree because frames are processed independently and
    merged in order.
    """
    if cfg.net.ms_form != MS_FORM_ADJACENT:
        raise ParameterError(
            "full-frame runs require ms_form='adjacent'; the head-anchored form is "
            "restricted to brute-force checks on tiny inputs"
        )
    frames = load_frames(cfg.input_pattern, (cfg.frame_start, cfg.frame_stop))

    indices = range(len(frames))
    if cfg.parallelism == 1:
        outputs = [_process_frame(frames, t, cfg) for t in indices]
    else:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            outputs = list(pool.map(lambda t: _process_frame(frames, t, cfg), indices))

    results = [r for r, _ in outputs]
    gaw = build_gaw(results, cfg.fps)
    if cfg.output_dir:
        write_outputs(results, gaw, cfg, frames=frames)
        if any(extras for _, extras in outputs):
            _write_debug_dumps(outputs, cfg)
    return results, gaw


def _config_dict(cfg: PipelineConfig) -> dict:
    d = asdict(cfg)
    d["flow"] = asdict(cfg.flow)
    d["net"] = asdict(cfg.net)
    return d


def write_outputs(results, gaw: GawSeries, cfg: PipelineConfig, frames=None):
    """Write contours.json, gaw.csv, and optional overlay images."""
    if not results:
        raise ParameterError("no results to write")
    os.makedirs(cfg.output_dir, exist_ok=True)

    payload = {
        "config": _config_dict(cfg),
        "frames": [
            {
                "index": r.frame_index,
                "status": r.status,
                "closed": r.closed,
                "area_px2": float(r.area),
                "contour": [[int(x), int(y)] for x, y in r.contour],
            }
            for r in results
        ],
    }
    contours_path = os.path.join(cfg.output_dir, "contours.json")
    with open(contours_path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")

    gaw_path = os.path.join(cfg.output_dir, "gaw.csv")
    with open(gaw_path, "w") as f:
        f.write("frame,area_px2\n")
        for idx, area in zip(gaw.frame_indices, gaw.areas):
            f.write(f"{idx},{area:.2f}\n")

    if cfg.overlays and frames is not None:
        for r in results:
            frame = frames[r.frame_index]
            rgb = np.repeat((frame.data * 255.0).round().astype(np.uint8)[:, :, None], 3, axis=2)
            for x, y in r.contour:
                rgb[y, x] = (255, 0, 0)
            Image.fromarray(rgb, "RGB").save(
                os.path.join(cfg.output_dir, f"overlay_{r.frame_index:06d}.png")
            )
    return contours_path, gaw_path


def _write_debug_dumps(outputs, cfg: PipelineConfig):
    for t, (_, extras) in enumerate(outputs):
        if extras is None:
            continue
        velocity, state, lat = extras
        if cfg.dump_velocity:
            planes = np.stack([velocity.vx, velocity.vy]).astype(np.float32)
            planes.tofile(os.path.join(cfg.output_dir, f"velocity_{t:06d}.f32"))
            with open(os.path.join(cfg.output_dir, f"velocity_{t:06d}.json"), "w") as f:
                json.dump(
                    {"width": lat.width, "height": lat.height, "lambda1": cfg.flow.lambda1},
                    f,
                )
        if cfg.dump_saliency:
            per_pixel = state.phi.reshape(lat.height, lat.width, 8).max(axis=2)
            per_pixel.astype(np.float32).tofile(
                os.path.join(cfg.output_dir, f"saliency_{t:06d}.f32")
            )
            with open(os.path.join(cfg.output_dir, f"saliency_{t:06d}.json"), "w") as f:
                json.dump({"width": lat.width, "height": lat.height}, f)
        if cfg.dump_elements:
            fx, fy = lat.from_pixels()
            tx, ty = lat.to_pixels()
            with open(os.path.join(cfg.output_dir, f"elements_{t:06d}.csv"), "w") as f:
                f.write("id,from_x,from_y,to_x,to_y,orientation,active\n")
                for eid in lat.element_ids():
                    f.write(
                        f"{eid},{fx[eid]},{fy[eid]},{tx[eid]},{ty[eid]},"
                        f"{lat.orientation[eid]:.6f},{int(lat.active[eid])}\n"
                    )


def parse_contours(path: str) -> dict:
    """Load a contours.json file back into Python structures."""
    with open(path) as f:
        data = json.load(f)
    for fr in data["frames"]:
        fr["contour"] = [(int(x), int(y)) for x, y in fr["contour"]]
    return data


# ---------------------------------------------------------------------------
# CLI


def _env_value(name: str):
    return os.environ.get(ENV_PREFIX + name.replace("-", "_").upper())


def _resolve(args: argparse.Namespace, name: str, cast, default):
    """CLI flag > GLOTSAL_* environment variable > default."""
    cli = getattr(args, name.replace("-", "_"))
    if cli is not None:
        return cli
    env = _env_value(name)
    if env is not None:
        if cast is bool:
            return env.strip().lower() in ("1", "true", "yes", "on")
        return cast(env)
    return default


_RUN_OPTIONS = [
    # (flag, cast, default, help)
    ("alpha", float, 0.3, "weight of the structural channel"),
    ("beta", float, 0.7, "weight of the motion channel"),
    ("rho-active", float, 1.0, "attenuation of active elements"),
    ("rho-virtual", float, 0.7, "attenuation of virtual (gap) elements"),
    ("kappa", float, 1.0, "curvature penalty scale"),
    ("iterations", int, 60, "solver horizon (max curve length in elements)"),
    ("lambda1", float, 0.5, "tanh steepness of the velocity normalization"),
    ("lambda2", float, 0.5, "decay of the spatial velocity-distance"),
    ("ms-form", str, MS_FORM_ADJACENT, "motion measure form (adjacent|head_anchored)"),
    ("front-cap", int, 8, "trade-off front width cap (0 = exact, small inputs)"),
    ("angle-tolerance", float, 0.0, "extra tangent-alignment slack for active elements"),
    ("window-radius", int, 2, "half-width of the optical-flow window"),
    ("min-eigenvalue", float, 1e-4, "flow conditioning threshold"),
    ("pyramid-levels", int, 1, "optical-flow pyramid levels (1 = single level)"),
    ("canny-sigma", float, 1.4, "Gaussian sigma before edge detection"),
    ("flow-blur-sigma", float, 1.0, "pre-smoothing sigma for velocity estimation (0 = off)"),
    ("canny-low", float, 0.1, "weak edge threshold"),
    ("canny-high", float, 0.25, "strong edge threshold"),
    ("min-peak", float, 0.05, "minimum saliency peak for a usable contour"),
    ("fps", float, 4000.0, "acquisition frame rate (metadata only)"),
    ("parallelism", int, 1, "frame-level worker threads"),
    ("frame-start", int, None, "first frame (after sorting)"),
    ("frame-stop", int, None, "frame slice end (exclusive)"),
]

_RUN_FLAGS = [
    ("overlays", False, "write per-frame overlay PNGs"),
    ("normalize-maps", True, "per-frame channel normalization before blending"),
    ("clamp-ms", True, "floor negative motion steps at zero"),
    ("dump-velocity", False, "dump normalized velocity fields"),
    ("dump-saliency", False, "dump per-pixel saliency maps"),
    ("dump-elements", False, "dump the element lattice as CSV"),
]


def _add_run_parser(sub):
    p = sub.add_parser("run", help="process a frame sequence")
    p.add_argument("--input", required=True, help="frame directory or glob pattern")
    p.add_argument("--output", required=True, help="output directory")
    for flag, cast, _, helptext in _RUN_OPTIONS:
        p.add_argument(f"--{flag}", type=cast, default=None, help=helptext)
    for flag, _, helptext in _RUN_FLAGS:
        p.add_argument(
            f"--{flag}", action=argparse.BooleanOptionalAction, default=None, help=helptext
        )
    return p


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    opts = {}
    for flag, cast, default, _ in _RUN_OPTIONS:
        opts[flag.replace("-", "_")] = _resolve(args, flag, cast, default)
    for flag, default, _ in _RUN_FLAGS:
        opts[flag.replace("-", "_")] = _resolve(args, flag, bool, default)

    flow = FlowParams(
        window_radius=opts["window_radius"],
        min_eigenvalue=opts["min_eigenvalue"],
        lambda1=opts["lambda1"],
        pyramid_levels=opts["pyramid_levels"],
    )
    net = NetworkParams(
        rho_active=opts["rho_active"],
        rho_virtual=opts["rho_virtual"],
        curvature_scale=opts["kappa"],
        iterations=opts["iterations"],
        alpha=opts["alpha"],
        beta=opts["beta"],
        ms_form=opts["ms_form"],
        normalize_maps=opts["normalize_maps"],
        clamp_ms=opts["clamp_ms"],
        angle_tolerance=opts["angle_tolerance"],
        front_cap=opts["front_cap"],
        lambda2=opts["lambda2"],
    )
    return PipelineConfig(
        input_pattern=args.input,
        output_dir=args.output,
        frame_start=opts["frame_start"],
        frame_stop=opts["frame_stop"],
        fps=opts["fps"],
        parallelism=opts["parallelism"],
        min_peak=opts["min_peak"],
        overlays=opts["overlays"],
        dump_velocity=opts["dump_velocity"],
        dump_saliency=opts["dump_saliency"],
        dump_elements=opts["dump_elements"],
        canny_sigma=opts["canny_sigma"],
        canny_low=opts["canny_low"],
        canny_high=opts["canny_high"],
        flow_blur_sigma=opts["flow_blur_sigma"],
        flow=flow,
        net=net,
    )


def _cmd_run(args) -> int:
    cfg = _config_from_args(args)
    results, gaw = run_pipeline(cfg)
    ok = sum(1 for r in results if r.status == STATUS_OK)
    print(f"processed {len(results)} frames: {ok} ok, {len(results) - ok} degraded")
    print(f"outputs in {cfg.output_dir}")
    return 0


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        width=_resolve(args, "width", int, 64),
        height=_resolve(args, "height", int, 64),
        period_frames=_resolve(args, "period", int, 20),
        a_max=_resolve(args, "a-max", float, 14.0),
        b=_resolve(args, "b", float, 5.0),
        noise_sigma=_resolve(args, "noise-sigma", float, 0.05),
        texture_amp=_resolve(args, "texture-amp", float, 0.1),
        frames=_resolve(args, "frames", int, 60),
        seed=_resolve(args, "seed", int, 0),
    )
    fmt = _resolve(args, "format", str, "png")
    if fmt not in ("png", "pgm"):
        raise ParameterError(f"format must be png or pgm, got {fmt!r}")
    os.makedirs(args.output, exist_ok=True)
    frames, truths = generate(spec)
    for frame in frames:
        img = Image.fromarray((frame.data * 255.0).round().astype(np.uint8), "L")
        img.save(os.path.join(args.output, f"frame_{frame.index:06d}.{fmt}"))
    truth_payload = {
        "spec": asdict(spec),
        "frames": [
            {
                "index": t.frame_index,
                "a": t.a,
                "b": t.b,
                "center": list(t.center),
                "boundary": [[float(x), float(y)] for x, y in t.boundary],
            }
            for t in truths
        ],
    }
    with open(os.path.join(args.output, "truth.json"), "w") as f:
        json.dump(truth_payload, f)
    print(f"wrote {len(frames)} frames and truth.json to {args.output}")
    return 0


def _cmd_oracle(args) -> int:
    instances = _resolve(args, "instances", int, 50)
    size = _resolve(args, "size", int, 6)
    max_len = _resolve(args, "max-len", int, 5)
    seed = _resolve(args, "seed", int, 0)
    tolerance = _resolve(args, "tolerance", float, 1e-9)
    params = NetworkParams(
        alpha=_resolve(args, "alpha", float, 0.3),
        beta=_resolve(args, "beta", float, 0.7),
        iterations=max_len,
        front_cap=0,
        ms_form=_resolve(args, "ms-form", str, MS_FORM_ADJACENT),
    )
    worst = 0.0
    failures = 0
    for i in range(instances):
        lat, vf = random_instance(size, size, seed=seed + i, params=params)
        value, _ = brute_force_max(lat, vf, params, max_len=max_len)
        if params.ms_form == MS_FORM_ADJACENT:
            state = run_dp(lat, vf, params)
            dp_value = float(state.phi[lat.present].max())
        else:
            print(f"instance {i}: head-anchored form, brute force only: {value:.9f}")
            continue
        diff = abs(dp_value - value)
        worst = max(worst, diff)
        status = "ok" if diff <= tolerance else "MISMATCH"
        if diff > tolerance:
            failures += 1
        print(f"instance {i}: dp={dp_value:.12f} brute={value:.12f} |diff|={diff:.3e} {status}")
    print(f"{instances} instances, worst |diff| = {worst:.3e}, failures = {failures}")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glottal-saliency",
        description="Delineate glottis contours in high-speed endoscopy frame sequences.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_run_parser(sub)

    p_synth = sub.add_parser("synth", help="generate a ground-truthed synthetic sequence")
    p_synth.add_argument("--output", required=True, help="output directory")
    for flag, cast, helptext in [
        ("width", int, "frame width"),
        ("height", int, "frame height"),
        ("frames", int, "number of frames"),
        ("period", int, "oscillation period in frames"),
        ("a-max", float, "peak horizontal semi-axis"),
        ("b", float, "vertical semi-axis"),
        ("noise-sigma", float, "additive Gaussian noise sigma"),
        ("texture-amp", float, "background texture amplitude"),
        ("seed", int, "random seed"),
        ("format", str, "frame file format (png|pgm)"),
    ]:
        p_synth.add_argument(f"--{flag}", type=cast, default=None, help=helptext)

    p_oracle = sub.add_parser("oracle", help="brute-force check of the solver on tiny inputs")
    for flag, cast, helptext in [
        ("instances", int, "number of random instances"),
        ("size", int, "lattice side length"),
        ("max-len", int, "curve length bound (= solver horizon)"),
        ("seed", int, "base random seed"),
        ("tolerance", float, "max allowed |dp - brute|"),
        ("alpha", float, "structural weight"),
        ("beta", float, "motion weight"),
        ("ms-form", str, "motion measure form"),
    ]:
        p_oracle.add_argument(f"--{flag}", type=cast, default=None, help=helptext)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "oracle":
            return _cmd_oracle(args)
    except GlottalSaliencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
