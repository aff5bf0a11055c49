"""Command-line experiments over synthetic scenes and pose files.

Every subcommand writes a table (CSV by default, or JSON) to ``--out`` or stdout.
CSV output ends with one ``#`` comment line carrying the tool version, seed and a
SHA-256 of the effective configuration. Exit codes: 0 success, 1 numerical failure,
2 usage, parse or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .camera import Pose2D, Pose3D
from .errors import ConfigurationError, ConvergenceError, NoBonesError, NumericalError, PoseGeometryError
from .heatmap import (DEFAULT_METRIC_GEOMETRY, HeatmapGeometry, soft_argmax_25d, soft_argmax_metric,
                      synthesize_gaussian_volume)
from .metrics import EvalProtocol, auc, bone_rescale, joint_errors, pa_mpjpe, pck, select_joints
from .scale_recovery import Pose25D, recover_root_depth
from .skeleton import DEFAULT_BONES, BoneSpec
from .striding import StridingConfig, receptive_centers
from .synth import SceneSpec, depth_ratio_sweep, make_rng, place_and_project, random_pose

log = logging.getLogger("metricpose")

RECONSTRUCT_COLUMNS = ["ratio", "solver", "noise_2d", "mean_z0_error_mm", "median_z0_error_mm",
                       "mean_rel_z0_error", "median_rel_z0_error"]
ROUNDTRIP_COLUMNS = ["joint", "n_samples", "mean_error", "max_error", "mean_depth_error", "max_depth_error"]
SCALE_COLUMNS = ["planar", "noise_2d", "length_scale", "n_scenes", "failures", "mean_abs_error_mm",
                 "median_abs_error_mm", "max_abs_error_mm", "mean_z0_ratio"]
EVALUATE_COLUMNS = ["sequence", "n_frames", "mpjpe", "pa_mpjpe", "pck", "auc", "a_mpjpe", "a_pck"]
STRIDING_COLUMNS = ["mode", "input_size", "stride", "n_centers", "mean_px", "centers_px"]


class UsageError(Exception):
    pass


def _check_keys(config, allowed):
    unknown = set(config) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")


def _load_json(path, what):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {what} {path}: {exc.msg} at line {exc.lineno} column {exc.colno}") \
            from exc


def _pop_seed(config, args, required=True):
    seed = args.seed if args.seed is not None else config.pop("seed", None)
    config.pop("seed", None)
    if seed is None and required:
        raise UsageError("this subcommand is stochastic: pass --seed or put \"seed\" in the config")
    if seed is not None and (not isinstance(seed, int) or not 0 <= seed < 2 ** 64):
        raise UsageError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render(columns, rows, meta, fmt) -> str:
    if fmt == "json":
        payload = {"columns": columns, "rows": [dict(zip(columns, r)) for r in rows], "meta": meta}
        return json.dumps(payload, indent=2, default=lambda o: o.item() if hasattr(o, "item") else str(o)) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_fmt(v) for v in r])
    buf.write("# " + " ".join(f"{k}={meta[k]}" for k in sorted(meta)) + "\n")
    return buf.getvalue()


def _meta(command, config, seed):
    canonical = json.dumps({"command": command, "config": config, "seed": seed}, sort_keys=True)
    return {"tool": "metricpose", "version": __version__, "command": command, "seed": seed,
            "config_sha256": hashlib.sha256(canonical.encode()).hexdigest()}


def cmd_roundtrip(config, seed):
    """Synthesize Gaussian volumes around random interior targets and decode them back."""
    _check_keys(config, ("geometry", "sigma_bins", "n_scenes", "n_joints"))
    geometry = HeatmapGeometry.from_json(config.get("geometry", DEFAULT_METRIC_GEOMETRY.to_json()))
    sigma = float(config.get("sigma_bins", 1.0))
    n_scenes = int(config.get("n_scenes", 100))
    n_joints = int(config.get("n_joints", 17))
    margin = 3.0 * sigma * geometry.step
    lo, hi = margin, geometry.upper - margin
    if np.any(hi < lo):
        raise ConfigurationError(f"no interior region at least 3 sigma from the faces for sigma={sigma} bins")
    rng = make_rng(seed)
    errors = np.empty((n_scenes, n_joints))
    depth_errors = np.empty((n_scenes, n_joints))
    for i in range(n_scenes):
        targets = lo + rng.random((n_joints, 3)) * (hi - lo)
        vol = synthesize_gaussian_volume(targets, geometry, sigma)
        if geometry.mode == "metric":
            decoded = soft_argmax_metric(vol)
            errors[i] = np.linalg.norm(decoded - targets, axis=1)
            depth_errors[i] = np.abs(decoded[:, 2] - targets[:, 2])
        else:
            xy, depth = soft_argmax_25d(vol)
            errors[i] = np.linalg.norm(xy - targets[:, :2], axis=1)
            depth_errors[i] = np.abs(depth - targets[:, 2])
    rows = [[j, n_scenes, errors[:, j].mean(), errors[:, j].max(), depth_errors[:, j].mean(),
             depth_errors[:, j].max()] for j in range(n_joints)]
    rows.append(["all", errors.size, errors.mean(), errors.max(), depth_errors.mean(), depth_errors.max()])
    return ROUNDTRIP_COLUMNS, rows


def cmd_reconstruct_compare(config, seed):
    """Weak vs full perspective root-depth error per depth ratio, noise-free and noisy."""
    config = dict(config)
    ratios = config.pop("ratios", [1.0, 1.1, 1.2, 1.4])
    n_scenes = int(config.pop("n_scenes", 500))
    spec = SceneSpec.from_json({**config, "seed": seed})
    rows = [list(r) for r in depth_ratio_sweep(spec, ratios, n_scenes)]
    return RECONSTRUCT_COLUMNS, rows


def _planar(pose: Pose3D) -> Pose3D:
    flat = pose.joints.copy()
    flat[:, 2] = 0.0
    return Pose3D(flat, "root_relative", pose.root_index)


def cmd_scale_recovery(config, seed):
    """Bone-length root-depth recovery error versus 2D noise and reference-length mismatch.

    Reference lengths are the generating pose's own bone lengths times ``length_scale``.
    """
    config = dict(config)
    n_scenes = int(config.pop("n_scenes", 200))
    noise_levels = [float(v) for v in config.pop("noise_levels", [0.0, 0.001])]
    length_scales = [float(v) for v in config.pop("length_scales", [1.0, 1.1])]
    planar_modes = [bool(v) for v in config.pop("planar", [False, True])]
    spec = SceneSpec.from_json({**config, "seed": seed})
    bones = spec.bones
    e = bones.edge_array
    rng = make_rng(seed)
    trials = []
    for _ in range(n_scenes):
        pose = random_pose(bones, rng)
        z0 = rng.uniform(*spec.depth_range_mm)
        lateral = rng.uniform(-spec.lateral_spread, spec.lateral_spread, 2) if spec.lateral_spread else np.zeros(2)
        trials.append((pose, z0, lateral, rng.standard_normal((len(pose), 2))))

    rows = []
    for planar in planar_modes:
        for sigma in noise_levels:
            for scale in length_scales:
                errs, ratios, failures = [], [], 0
                for pose, z0, lateral, noise in trials:
                    if planar:
                        pose = _planar(pose)
                    lengths = np.linalg.norm(pose.joints[e[:, 0]] - pose.joints[e[:, 1]], axis=1)
                    targets = BoneSpec(bones.edges, tuple(lengths * scale), bones.n_joints)
                    scene = place_and_project(pose, spec.camera, [lateral[0] * z0, lateral[1] * z0, z0])
                    p2d = scene.normalized
                    if sigma:
                        p2d = Pose2D(p2d.joints + sigma * noise, "normalized")
                    try:
                        result = recover_root_depth(Pose25D(p2d, pose.joints[:, 2]), targets)
                    except (ConvergenceError, NoBonesError):
                        failures += 1
                        continue
                    # recovered depth is that of the root joint, which sits at relative depth 0
                    errs.append(abs(result.z0 - z0))
                    ratios.append(result.z0 / z0)
                errs = np.array(errs) if errs else np.array([np.nan])
                rows.append([planar, sigma, scale, n_scenes, failures, float(np.mean(errs)), float(np.median(errs)),
                             float(np.max(errs)), float(np.mean(ratios)) if ratios else float("nan")])
    return SCALE_COLUMNS, rows


def _load_sequences(path, what):
    doc = _load_json(path, what)
    try:
        return [(str(s["name"]), [Pose3D.from_json(p) for p in s["poses"]]) for s in doc["sequences"]]
    except (KeyError, TypeError) as exc:
        raise UsageError(f"{what} {path} does not follow the sequence schema: {exc!r}") from exc
    except PoseGeometryError as exc:
        raise UsageError(f"{what} {path}: {exc}") from exc


def evaluate_frames(preds, gts, protocol: EvalProtocol, bones: BoneSpec):
    """Per-frame metric values as a dict of arrays."""
    out = {k: [] for k in ("mpjpe", "pa_mpjpe", "pck", "auc", "a_mpjpe", "a_pck")}
    root = protocol.root_index
    for pred, gt in zip(preds, gts):
        p, g = np.asarray(pred, float), np.asarray(gt, float)
        if p.shape != g.shape:
            raise ConfigurationError(f"prediction/ground truth joint counts differ: {p.shape} vs {g.shape}")
        if protocol.bone_rescale:
            p = np.asarray(bone_rescale(p, g, bones.edges, root))
        rel_p, rel_g = (p - p[root], g - g[root]) if protocol.root_align else (p, g)
        if protocol.joint_subset is not None:
            p, g = select_joints(p, protocol.joint_subset), select_joints(g, protocol.joint_subset)
            rel_p, rel_g = select_joints(rel_p, protocol.joint_subset), select_joints(rel_g, protocol.joint_subset)
        err = joint_errors(rel_p, rel_g)
        abs_err = joint_errors(p, g)
        out["mpjpe"].append(err.mean())
        out["pa_mpjpe"].append(pa_mpjpe(rel_p, rel_g) if protocol.procrustes else np.nan)
        out["pck"].append(pck(rel_p, rel_g, protocol.pck_threshold))
        out["auc"].append(auc(rel_p, rel_g, protocol.auc_max))
        out["a_mpjpe"].append(abs_err.mean())
        out["a_pck"].append(float(np.mean(abs_err <= protocol.pck_threshold)))
    return {k: np.array(v) for k, v in out.items()}


def cmd_evaluate(config, pred_path, gt_path):
    """Per-sequence and aggregate metrics; the aggregate averages over all frames."""
    config = dict(config)
    bones = BoneSpec.from_json(config.pop("bones")) if "bones" in config else DEFAULT_BONES
    protocol = EvalProtocol.from_json(config)
    preds = _load_sequences(pred_path, "prediction file")
    gts = dict(_load_sequences(gt_path, "ground-truth file"))
    rows, frames = [], []
    for name, pred_poses in preds:
        if name not in gts:
            raise ConfigurationError(f"sequence {name!r} missing from ground truth")
        if len(gts[name]) != len(pred_poses):
            raise ConfigurationError(f"sequence {name!r}: {len(pred_poses)} predictions vs {len(gts[name])} labels")
        m = evaluate_frames(pred_poses, gts[name], protocol, bones)
        frames.append(m)
        rows.append([name, len(pred_poses)] + [float(m[k].mean()) for k in EVALUATE_COLUMNS[2:]])
    if not frames:
        raise ConfigurationError("no sequences to evaluate")
    total = {k: np.concatenate([f[k] for f in frames]) for k in frames[0]}
    rows.append(["ALL", len(total["mpjpe"])] + [float(total[k].mean()) for k in EVALUATE_COLUMNS[2:]])
    return EVALUATE_COLUMNS, rows


def cmd_striding_report(config):
    _check_keys(config, ("input_size", "strides", "modes"))
    input_size = int(config.get("input_size", 256))
    strides = [int(s) for s in config.get("strides", [32, 16])]
    modes = config.get("modes", ["normal", "centered"])
    rows = []
    for mode in modes:
        for stride in strides:
            c = receptive_centers(StridingConfig(input_size, stride, mode))
            rows.append([mode, input_size, stride, len(c), float(c.mean()), " ".join(_fmt(v) for v in c)])
    return STRIDING_COLUMNS, rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metricpose", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"metricpose {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="unsigned 64-bit RNG seed (ignored by deterministic subcommands)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("roundtrip", help="heatmap synthesize/decode round trip"))
    common(sub.add_parser("reconstruct-compare", help="weak vs full perspective root recovery"))
    common(sub.add_parser("scale-recovery", help="bone-length root depth recovery"))
    ev = common(sub.add_parser("evaluate", help="pose metrics over prediction/ground-truth files"))
    ev.add_argument("--pred", required=True, help="prediction sequences JSON")
    ev.add_argument("--gt", required=True, help="ground-truth sequences JSON")
    common(sub.add_parser("striding-report", help="receptive-field center grids"))
    return parser


def run(args) -> str:
    config = _load_json(args.config, "config") if args.config else {}
    if not isinstance(config, dict):
        raise UsageError("config must be a JSON object")
    seeded = {"roundtrip": cmd_roundtrip, "reconstruct-compare": cmd_reconstruct_compare,
              "scale-recovery": cmd_scale_recovery}
    if args.command in seeded:
        seed = _pop_seed(config, args)
        columns, rows = seeded[args.command](dict(config), seed)
    elif args.command == "evaluate":
        seed = None
        columns, rows = cmd_evaluate(config, args.pred, args.gt)
    else:
        seed = None
        columns, rows = cmd_striding_report(config)
    return render(columns, rows, _meta(args.command, config, seed), args.format)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = run(args)
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    except UsageError as exc:
        print(f"metricpose: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"metricpose: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (PoseGeometryError, ValueError, TypeError) as exc:
        print(f"metricpose: invalid input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"metricpose: I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
