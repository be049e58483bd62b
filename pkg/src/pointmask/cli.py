"""Batch command-line front door.

Subcommands: blot, fields, refine, pseudomask, eval, simulate, overlay.
Flags can also come from a `key = value` config file (--config); explicit
flags win. Every run prints a reproducibility header (version, seed,
resolved configuration) to stderr. Exit status: 0 success, 1 input error,
2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, errors, expansion, formats, overlay, synthetic
from .assemble import assemble, superimpose
from .blots import BlotConfig, derive_seed, generate_blots
from .evaluate import ConfusionMatrix, accumulate, miou
from .expansion import ExpansionState
from .fields import (STAGE_AGGREGATED, STAGE_CONFIDENCE, STAGE_EXPANDED,
                     STAGE_RAW, aggregate, build_confidence_stack,
                     build_distance_stack)
from .pac import DEFAULT_PAC_LAYERS, PacLayerSpec, refine_planes
from .pipeline import PipelineConfig, synthesize
from .walker import WalkerProblem, solve_walker

SUBCOMMANDS = ("blot", "fields", "refine", "pseudomask", "eval", "simulate", "overlay")

_DEFAULTS = {
    "blot": {
        "image": None, "points": None, "out": None, "classes": None,
        "seed": None, "k": 5, "phi": 0.5, "delta": 0.3, "rotation": 5.0,
        "translation": 0.02, "bins": 32, "tau_rw": 0.9, "beta": 130.0,
        "tolerance": 1e-6, "max_iterations": 5000, "dump_probs": None,
        "manifest": None, "out_dir": None, "jobs": 1,
    },
    "fields": {
        "image": None, "points": None, "out": None, "classes": None,
        "stage": STAGE_AGGREGATED, "state": None, "seed": None,
        "manifest": None, "out_dir": None, "jobs": 1,
    },
    "refine": {
        "image": None, "scores": None, "out": None, "variant": "exp-ratio",
        "layers": None, "seed": None, "manifest": None, "out_dir": None,
        "jobs": 1,
    },
    "pseudomask": {
        "image": None, "points": None, "scores": None, "out": None,
        "classes": None, "threshold": 0.75, "variant": "exp-ratio",
        "layers": None, "epoch_loss_file": None, "state_in": None,
        "state_out": None, "eta": 0.025, "omega": -0.025, "seed": None,
        "k": 5, "phi": 0.5, "delta": 0.3, "rotation": 5.0,
        "translation": 0.02, "bins": 32, "tau_rw": 0.9, "beta": 130.0,
        "tolerance": 1e-6, "max_iterations": 5000, "overlay_out": None,
        "prov_out": None, "manifest": None, "out_dir": None, "jobs": 1,
    },
    "eval": {
        "pred_dir": None, "gt_dir": None, "classes": None, "csv": None,
        "seed": None,
    },
    "simulate": {
        "scenes": 50, "epochs": 10, "seed": None, "out": None,
        "threshold": synthetic.SIM_THRESHOLD, "noise_start": 0.95,
        "noise_end": 0.92, "height": 48, "width": 192, "classes": 2,
    },
    "overlay": {
        "image": None, "mask": None, "field": None, "plane": None,
        "out": None, "alpha": 0.5, "seed": None,
    },
}

_HELP = {
    "image": "input image (PNG or binary PPM)",
    "points": "point annotation file (class_id,x,y per line)",
    "scores": "per-class score stack (PMSM)",
    "out": "output path",
    "classes": "number of object classes C (default: inferred)",
    "seed": "RNG seed (fallback: PMP_SEED environment variable, then 0)",
    "manifest": "batch file with one `image points scores` triple per line",
    "out_dir": "output directory for manifest mode",
    "jobs": "parallel workers for manifest mode",
}


class _Parser(argparse.ArgumentParser):
    """argparse that exits 1 (input error) instead of 2 on bad usage."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="pointmask", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pointmask {__version__}")
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="`key = value` config file merged under the flags")
        for key in _DEFAULTS[name]:
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, default=None, help=_HELP.get(key))
    return parser


def _load_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise errors.MissingFile(f"config file {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise errors.ParseError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _convert(key, text, builtin):
    if isinstance(builtin, bool):
        lowered = str(text).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise errors.ParseError(f"flag {key}: expected boolean, got {text!r}")
    for kind in (int, float):
        if isinstance(builtin, kind):
            try:
                return kind(text)
            except ValueError as exc:
                raise errors.ParseError(
                    f"flag {key}: expected {kind.__name__}, got {text!r}") from exc
    return text


def _resolve(args, name) -> dict:
    defaults = _DEFAULTS[name]
    config = _load_config_file(args.config) if args.config else {}
    unknown = set(config) - set(defaults) - {"seed"}
    if unknown:
        raise errors.ParseError(
            f"unknown config keys for {name}: {', '.join(sorted(unknown))}")
    resolved = {}
    for key, builtin in defaults.items():
        value = getattr(args, key)
        if value is None and key in config:
            value = config[key]
        if value is None:
            resolved[key] = builtin
        else:
            reference = builtin if builtin is not None else ""
            # numeric-looking defaults drive conversion; path-likes stay str
            if isinstance(builtin, (int, float)) and not isinstance(builtin, bool):
                resolved[key] = _convert(key, value, builtin)
            elif isinstance(reference, str) or builtin is None:
                resolved[key] = str(value)
            else:
                resolved[key] = _convert(key, value, builtin)
    if resolved.get("seed") is None:
        env = os.environ.get("PMP_SEED")
        resolved["seed"] = int(env) if env else 0
    else:
        resolved["seed"] = int(resolved["seed"])
    return resolved


def _require(resolved, name, *keys):
    for key in keys:
        if resolved.get(key) is None:
            raise errors.ParseError(
                f"{name}: missing required flag --{key.replace('_', '-')}")


def _print_header(name, resolved):
    print(f"# pointmask {__version__}", file=sys.stderr)
    print(f"# subcommand: {name}", file=sys.stderr)
    for key in sorted(resolved):
        print(f"# {key} = {resolved[key]}", file=sys.stderr)


def _load_points(path, classes):
    num_classes = int(classes) if classes is not None else formats.infer_num_classes(path)
    return formats.read_points(path, num_classes)


def _load_layers(path):
    if path is None:
        return DEFAULT_PAC_LAYERS
    layers = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise errors.ParseError(
                    f"{path}:{lineno}: expected `kernel dilation stride`")
            try:
                k, d, s = (int(p) for p in parts)
                layers.append(PacLayerSpec(k, d, s))
            except ValueError as exc:
                raise errors.ParseError(f"{path}:{lineno}: {exc}") from exc
    if not layers:
        raise errors.ParseError(f"{path}: no layers defined")
    return tuple(layers)


def _blot_config(resolved, seed):
    return BlotConfig(
        iterations=int(resolved["k"]),
        kld_threshold=float(resolved["phi"]),
        iou_threshold=float(resolved["delta"]),
        rotation_base=float(resolved["rotation"]),
        translation_base=float(resolved["translation"]),
        histogram_bins=int(resolved["bins"]),
        rng_seed=seed,
    )


def _derived_name(out_dir, image_path, suffix):
    stem = os.path.splitext(os.path.basename(image_path))[0]
    return os.path.join(out_dir, stem + suffix)


def _manifest_entries(path):
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise errors.ParseError(
                    f"{path}:{lineno}: expected `image points scores`")
            entries.append(tuple(None if p == "-" else p for p in parts))
    if not entries:
        raise errors.ParseError(f"{path}: empty manifest")
    return entries


def _run_entry(name, resolved, entry):
    """Process one (image, points, scores) triple. Module-level for pickling."""
    image_path, points_path, scores_path = entry
    work = dict(resolved)
    work.update(image=image_path, points=points_path, scores=scores_path,
                manifest=None)
    work["seed"] = derive_seed(resolved["seed"], str(image_path))
    out_dir = resolved["out_dir"]
    if name == "blot":
        work["out"] = _derived_name(out_dir, image_path, "_blot.pgm")
        _do_blot(work)
    elif name == "fields":
        work["out"] = _derived_name(out_dir, image_path, "_fields.pmsm")
        _do_fields(work)
    elif name == "refine":
        work["out"] = _derived_name(out_dir, image_path, "_refined.pmsm")
        _do_refine(work)
    else:
        work["out"] = _derived_name(out_dir, image_path, "_mask.pgm")
        _do_pseudomask(work)
    return work["out"]


def _maybe_batch(name, resolved, single):
    if resolved.get("manifest") is None:
        single(resolved)
        return
    _require(resolved, name, "out_dir")
    os.makedirs(resolved["out_dir"], exist_ok=True)
    entries = _manifest_entries(resolved["manifest"])
    jobs = max(1, int(resolved.get("jobs", 1)))
    if jobs == 1:
        for entry in entries:
            _run_entry(name, resolved, entry)
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_entry, name, resolved, e) for e in entries]
            for future in futures:
                future.result()


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def _do_blot(resolved):
    _require(resolved, "blot", "image", "points", "out")
    image = formats.read_image(resolved["image"])
    points = _load_points(resolved["points"], resolved["classes"])
    config = _blot_config(resolved, resolved["seed"])
    mask = generate_blots(
        image, points, config, beta=float(resolved["beta"]),
        tau_rw=float(resolved["tau_rw"]), tolerance=float(resolved["tolerance"]),
        max_iterations=int(resolved["max_iterations"]))
    formats.write_mask(resolved["out"], mask)
    if resolved.get("dump_probs"):
        problem = WalkerProblem(
            image, points, beta=float(resolved["beta"]),
            tolerance=float(resolved["tolerance"]),
            max_iterations=int(resolved["max_iterations"]))
        formats.write_pmsm(resolved["dump_probs"], solve_walker(problem).planes)


def _do_fields(resolved):
    _require(resolved, "fields", "image", "points", "out")
    image = formats.read_image(resolved["image"])
    points = _load_points(resolved["points"], resolved["classes"])
    stage = resolved["stage"]
    h, w = image.height, image.width
    if stage == STAGE_RAW:
        stack = build_distance_stack(points, h, w)
    else:
        stack = build_confidence_stack(points, h, w)
        if stage in (STAGE_AGGREGATED, STAGE_EXPANDED):
            stack = aggregate(stack)
        if stage == STAGE_EXPANDED:
            state = (expansion.load_state(resolved["state"])
                     if resolved.get("state") else ExpansionState())
            stack = expansion.apply(stack, state)
        elif stage != STAGE_CONFIDENCE:
            raise errors.ParseError(f"unknown stage {stage!r}")
    formats.write_pmsm(resolved["out"], stack.planes)


def _do_refine(resolved):
    _require(resolved, "refine", "image", "scores", "out")
    image = formats.read_image(resolved["image"])
    stack = formats.read_score_stack(resolved["scores"])
    variant = resolved["variant"]
    layers = _load_layers(resolved.get("layers"))
    planes = refine_planes(stack.planes, image, layers, variant)
    if variant == "exp-ratio":
        planes = np.clip(planes, 0.0, 1.0)
    formats.write_pmsm(resolved["out"], planes)


def _expansion_state(resolved) -> ExpansionState:
    eta = float(resolved["eta"])
    omega = float(resolved["omega"])
    if resolved.get("state_in"):
        state = expansion.load_state(resolved["state_in"], eta=eta, omega=omega)
    else:
        state = ExpansionState(eta=eta, omega=omega)
    if resolved.get("epoch_loss_file"):
        with open(resolved["epoch_loss_file"], "r", encoding="utf-8") as fh:
            for raw in fh:
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                state = expansion.update(state, float(line))
    return state


def _do_pseudomask(resolved):
    _require(resolved, "pseudomask", "image", "points", "scores", "out")
    image = formats.read_image(resolved["image"])
    scores = formats.read_score_stack(resolved["scores"])
    classes = resolved["classes"]
    num_classes = int(classes) if classes is not None else scores.num_classes
    points = formats.read_points(resolved["points"], num_classes)
    state = _expansion_state(resolved)
    config = PipelineConfig(
        threshold=float(resolved["threshold"]),
        variant=resolved["variant"],
        layers=_load_layers(resolved.get("layers")),
        blot=_blot_config(resolved, resolved["seed"]),
        beta=float(resolved["beta"]),
        tau_rw=float(resolved["tau_rw"]),
        tolerance=float(resolved["tolerance"]),
        max_iterations=int(resolved["max_iterations"]),
    )
    result = synthesize(image, points, scores, state, config)
    formats.write_mask(resolved["out"], result.labels)
    prov_out = resolved.get("prov_out")
    if prov_out is None:
        stem, ext = os.path.splitext(resolved["out"])
        prov_out = stem + "_prov" + (ext or ".pgm")
    header = f"P5\n{result.labels.width} {result.labels.height}\n255\n".encode("ascii")
    formats.write_bytes_atomic(prov_out, header + result.provenance.tobytes())
    if resolved.get("state_out"):
        expansion.save_state(resolved["state_out"], state)
    if resolved.get("overlay_out"):
        rgba = overlay.render_overlay(image, result.labels)
        formats.write_png_rgba(resolved["overlay_out"], rgba)


def _do_eval(resolved):
    _require(resolved, "eval", "pred_dir", "gt_dir", "classes")
    num_classes = int(resolved["classes"])
    pred_dir, gt_dir = resolved["pred_dir"], resolved["gt_dir"]
    names = sorted(n for n in os.listdir(pred_dir) if n.endswith(".pgm"))
    if not names:
        raise errors.MissingFile(f"no .pgm masks in {pred_dir}")
    matrix = ConfusionMatrix(num_classes)
    for fname in names:
        gt_path = os.path.join(gt_dir, fname)
        if not os.path.exists(gt_path):
            raise errors.MissingFile(f"no ground truth for {fname}")
        pred = formats.read_mask(os.path.join(pred_dir, fname), num_classes)
        gt = formats.read_mask(gt_path, num_classes)
        accumulate(matrix, pred, gt)
    per_class, mean = miou(matrix)
    print(f"{'class':>8} {'IoU':>8}")
    for cls, value in sorted(per_class.items()):
        tag = "bg" if cls == num_classes + 1 else str(cls)
        print(f"{tag:>8} {value:8.4f}")
    print(f"{'mIoU':>8} {mean:8.4f}")
    if resolved.get("csv"):
        with open(resolved["csv"], "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "iou"])
            for cls, value in sorted(per_class.items()):
                writer.writerow([cls, f"{value:.6f}"])
            writer.writerow(["mean", f"{mean:.6f}"])


def _do_simulate(resolved):
    _require(resolved, "simulate", "out")
    seed = resolved["seed"]
    base = synthetic.SceneSpec(height=int(resolved["height"]),
                               width=int(resolved["width"]),
                               num_classes=int(resolved["classes"]))
    scenes = synthetic.make_scene_set(int(resolved["scenes"]), seed, base)
    schedule = synthetic.EpochSchedule.linear(
        int(resolved["epochs"]), float(resolved["noise_start"]),
        float(resolved["noise_end"]))
    config = synthetic.SimulationConfig(threshold=float(resolved["threshold"]))
    rows = synthetic.simulate_epochs(scenes, schedule, config, master_seed=seed)
    with open(resolved["out"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "variant", "mean_mIoU", "object_E", "background_E"])
        for row in rows:
            writer.writerow([row.epoch, row.variant, f"{row.mean_miou:.6f}",
                             f"{row.object_score:.6f}", f"{row.background_score:.6f}"])
    final = {r.variant: r.mean_miou for r in rows if r.epoch == schedule.epochs}
    for variant in synthetic.VARIANTS:
        print(f"{variant:>16} {final[variant]:8.4f}")


def _do_overlay(resolved):
    _require(resolved, "overlay", "out")
    if resolved.get("field"):
        _require(resolved, "overlay", "plane")
        planes = formats.read_pmsm(resolved["field"])
        index = int(resolved["plane"]) - 1
        if not 0 <= index < planes.shape[0]:
            raise errors.OutOfRange(
                f"plane {resolved['plane']} outside 1..{planes.shape[0]}")
        rgb = overlay.render_heatmap(np.clip(planes[index], 0.0, 1.0))
        formats.write_png_rgb(resolved["out"], rgb)
        return
    _require(resolved, "overlay", "image", "mask")
    image = formats.read_image(resolved["image"])
    mask = formats.read_mask(resolved["mask"])
    if (mask.height, mask.width) != (image.height, image.width):
        raise errors.DimensionMismatch("mask and image dimensions differ")
    rgba = overlay.render_overlay(image, mask, alpha=float(resolved["alpha"]))
    formats.write_png_rgba(resolved["out"], rgba)


_BATCHABLE = {
    "blot": _do_blot,
    "fields": _do_fields,
    "refine": _do_refine,
    "pseudomask": _do_pseudomask,
}


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return 1
    name = args.subcommand
    resolved = _resolve(args, name)
    _print_header(name, resolved)
    if name in _BATCHABLE:
        _maybe_batch(name, resolved, _BATCHABLE[name])
    elif name == "eval":
        _do_eval(resolved)
    elif name == "simulate":
        _do_simulate(resolved)
    else:
        _do_overlay(resolved)
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except SystemExit:
        raise
    except errors.PointmaskError as exc:
        print(f"pointmask: error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"pointmask: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - internal failure
        print(f"pointmask: internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
