"""Command-line entry point: ``weaklift <subcommand>``.

Exit codes: 0 success, 1 partial failure, 2 bad arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import synth
from .augment import AugmentConfig, SceneCatalog, SceneEntry, apply_augmentation, plan_augmentation
from .labels import boxes_to_labels, labels_to_dict, load_boxes, load_labels
from .plyio import _atomic_write, read_mesh
from .scene import (GenConfig, generate, load_sidecar, placements_from_sidecar, write_scene)
from .segments import SceneMesh, merge_horizontal, oversegment
from .shapes import CategoryConfig, TemplateBankError, build_template_bank, template_report

log = logging.getLogger("weaklift")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    gen: GenConfig = field(default_factory=GenConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    gamma: float = 3.0
    lam: float = 0.05
    error_rate: float = 0.0

    @classmethod
    def from_file(cls, path: Optional[str], seed: int = 0) -> "PipelineConfig":
        raw = {}
        if path:
            try:
                raw = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {path}: {exc}") from exc
        gen_keys = {f.name for f in fields(GenConfig)}
        aug_keys = {f.name for f in fields(AugmentConfig)}
        extra = {"gamma", "lam", "error_rate"}
        unknown = set(raw) - gen_keys - aug_keys - extra
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            gen = GenConfig(**{k: v for k, v in raw.items() if k in gen_keys and k != "seed"}, seed=seed)
            aug = AugmentConfig(**{k: v for k, v in raw.items() if k in aug_keys})
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from exc
        gamma = float(raw.get("gamma", 3.0))
        if gamma <= 1:
            raise UsageError("gamma must exceed 1")
        return cls(gen, aug, gamma, float(raw.get("lam", 0.05)), float(raw.get("error_rate", 0.0)))


def scene_rng(seed: int, scene_id: str) -> np.random.Generator:
    """Independent stream per scene, so results do not depend on scheduling."""
    key = zlib.crc32(scene_id.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))


def _load_categories(path) -> CategoryConfig:
    try:
        return CategoryConfig.load(path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load category config: {exc}") from exc


def _load_bank(templates, categories):
    """Return (bank, ok). Bad template files are logged; the rest are kept."""
    if not templates or not Path(templates).is_dir():
        raise UsageError(f"template directory not found: {templates}")
    try:
        return build_template_bank(templates, categories), True
    except TemplateBankError as exc:
        for f, msg in exc.failures.items():
            log.error("template %s: %s", f, msg)
        return exc.bank, False


def _label_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise UsageError(f"labels not found: {path}")
    return sorted(path.glob("*.json"))


# -- generate ---------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(bank, categories, gen, seed, meshes, out):
    _WORKER.update(bank=bank, categories=categories, gen=gen, seed=seed, meshes=meshes, out=out)


def _generate_one(label_path: str) -> tuple[str, bool, str]:
    w = _WORKER
    scene_id = Path(label_path).stem
    try:
        scene_id, labels = load_labels(label_path)
        t0 = time.perf_counter()
        mesh = None
        if w["meshes"]:
            mesh_path = Path(w["meshes"]) / f"{scene_id}.ply"
            if mesh_path.exists():
                mesh = SceneMesh(*read_mesh(mesh_path))
        scene = generate(labels, w["bank"], w["categories"], w["gen"],
                         scene_rng(w["seed"], scene_id), mesh)
        write_scene(w["out"], scene_id, scene, w["seed"])
        dt = time.perf_counter() - t0
        return scene_id, True, f"{len(labels)} objects, {len(scene.points)} points, {dt:.2f}s"
    except Exception as exc:  # noqa: BLE001 - one bad scene must not stop the batch
        return scene_id, False, f"{type(exc).__name__}: {exc}"


def cmd_generate(args) -> int:
    cfg = PipelineConfig.from_file(args.config, args.seed)
    categories = _load_categories(args.category_config)
    bank, bank_ok = _load_bank(args.templates, categories)
    files = [str(p) for p in _label_files(Path(args.labels))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    init = (bank, categories, cfg.gen, args.seed, args.meshes, str(out))

    if args.jobs <= 1:
        _init_worker(*init)
        results = [_generate_one(f) for f in files]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs, initializer=_init_worker,
                                 initargs=init) as pool:
            results = list(pool.map(_generate_one, files))

    failed = 0
    for scene_id, ok, msg in results:
        if ok:
            log.info("scene %s: %s", scene_id, msg)
        else:
            failed += 1
            log.error("scene %s failed: %s", scene_id, msg)
    log.info("generated %d/%d scenes", len(results) - failed, len(results))
    return EXIT_PARTIAL if failed or not bank_ok else EXIT_OK


# -- props / segment / jitter ----------------------------------------------------

def _emit_json(payload, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    if out:
        _atomic_write(Path(out), text.encode())
    else:
        sys.stdout.write(text)


def cmd_props(args) -> int:
    categories = _load_categories(args.category_config)
    bank, ok = _load_bank(args.templates, categories)
    _emit_json(template_report(bank), args.out)
    return EXIT_OK if ok else EXIT_PARTIAL


def cmd_segment(args) -> int:
    cfg = PipelineConfig.from_file(args.config)
    try:
        mesh = SceneMesh(*read_mesh(args.mesh))
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read mesh {args.mesh}: {exc}") from exc
    g = cfg.gen
    graph = oversegment(mesh, g.k_seg)
    if not args.raw:
        graph = merge_horizontal(graph, mesh, g.a_min, g.h_min, g.delta_h)
    _emit_json(graph.to_dict(), args.out)
    return EXIT_OK


def cmd_jitter(args) -> int:
    if not 0.0 <= args.error_rate <= 1.0:
        raise UsageError("--error-rate must lie in [0, 1]")
    try:
        boxes = load_boxes(args.boxes)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read boxes {args.boxes}: {exc}") from exc
    rng = np.random.default_rng(args.seed)
    labels = boxes_to_labels(boxes, args.error_rate, rng, args.mode)
    scene_id = args.scene_id or Path(args.boxes).stem
    _emit_json(labels_to_dict(scene_id, labels), args.out)
    return EXIT_OK


# -- stats -------------------------------------------------------------------------

PLAN_FILE = "augment_plan.json"


def _sidecar_paths(scene_dir) -> list[Path]:
    return [p for p in sorted(Path(scene_dir).glob("*.json")) if p.name != PLAN_FILE]


def scene_stats(scene_dir) -> dict:
    counts: dict[str, int] = {}
    points: dict[str, int] = {}
    for path in _sidecar_paths(scene_dir):
        try:
            sidecar = load_sidecar(path)
            instances = sidecar["instances"]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        for inst in instances:
            cat = inst["category"]
            counts[cat] = counts.get(cat, 0) + 1
            points[cat] = points.get(cat, 0) + int(inst["num_points"])
    return {cat: {"count": counts[cat], "mean_points": points[cat] / counts[cat]}
            for cat in sorted(counts)}


def format_stats(stats: dict) -> str:
    rows = [("category", "objects", "mean points")]
    rows += [(c, str(v["count"]), f"{v['mean_points']:.1f}") for c, v in stats.items()]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join(f"{r[0]:<{widths[0]}}  {r[1]:>{widths[1]}}  {r[2]:>{widths[2]}}" for r in rows)


def cmd_stats(args) -> int:
    if not Path(args.scenes).is_dir():
        raise UsageError(f"scene directory not found: {args.scenes}")
    stats = scene_stats(args.scenes)
    print(format_stats(stats))
    if args.out:
        _emit_json(stats, args.out)
    return EXIT_OK


# -- augment -----------------------------------------------------------------------

def _sidecar_bounds(sidecar: dict):
    lo, hi = np.full(2, np.inf), np.full(2, -np.inf)
    for inst in sidecar["instances"]:
        c, e = np.asarray(inst["center"][:2]), np.asarray(inst["extents"][:2])
        lo, hi = np.minimum(lo, c - e / 2), np.maximum(hi, c + e / 2)
    if not np.all(np.isfinite(lo)):
        return (0.0, 0.0), (0.0, 0.0)
    return tuple(map(float, lo)), tuple(map(float, hi))


def cmd_augment(args) -> int:
    cfg = PipelineConfig.from_file(args.config, args.seed)
    categories = _load_categories(args.category_config)
    bank, bank_ok = _load_bank(args.templates, categories)
    src = Path(args.scenes)
    if not src.is_dir():
        raise UsageError(f"scene directory not found: {src}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    entries, placements, failed = [], {}, 0
    for path in _sidecar_paths(src):
        try:
            sidecar = load_sidecar(path)
            records = placements_from_sidecar(sidecar)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.error("skipping %s: %s", path, exc)
            failed += 1
            continue
        sid = sidecar.get("scene_id", path.stem)
        placements[sid] = records
        entries.append(SceneEntry(sid, [(r.instance_id, r.category) for r in records],
                                  _sidecar_bounds(sidecar)))
        for suffix in (".ply", ".json"):
            f = src / f"{path.stem}{suffix}"
            if f.exists():
                shutil.copyfile(f, out / f.name)

    catalog = SceneCatalog(categories.names, entries)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    plan = plan_augmentation(catalog, cfg.augment, rng, categories.small, categories.scarce)
    _emit_json({sid: p.to_dict() for sid, p in plan.items()}, str(out / PLAN_FILE))

    for sid, sp in plan.items():
        try:
            new = apply_augmentation({sid: sp}, placements, bank, categories.names, cfg.gen,
                                     scene_rng(args.seed, f"{sid}#augment"))
        except Exception as exc:  # noqa: BLE001
            log.error("augmenting %s failed: %s", sid, exc)
            failed += 1
            continue
        for new_id, scene in new.items():
            write_scene(out, new_id, scene, args.seed)
            log.info("wrote %s (%d objects)", new_id, len(scene.placements))
    return EXIT_PARTIAL if failed or not bank_ok else EXIT_OK


def cmd_synth(args) -> int:
    synth.write_template_dir(args.out, args.categories or None, args.variants, args.points)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="weaklift", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, templates=True):
        if templates:
            sp.add_argument("--templates", required=True, help="directory of <category>/<id>.ply")
            sp.add_argument("--category-config", help="category JSON (default: bundled)")
        sp.add_argument("--config", help="JSON overriding generation/augmentation defaults")

    sp = sub.add_parser("props", help="report template shape properties")
    sp.add_argument("--templates", required=True)
    sp.add_argument("--category-config")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_props)

    sp = sub.add_parser("segment", help="oversegment a mesh and merge horizontal surfaces")
    sp.add_argument("--mesh", required=True)
    sp.add_argument("--raw", action="store_true", help="skip horizontal merging")
    sp.add_argument("--out")
    common(sp, templates=False)
    sp.set_defaults(func=cmd_segment)

    sp = sub.add_parser("generate", help="build virtual scenes from weak labels")
    common(sp)
    sp.add_argument("--labels", required=True, help="weak-label JSON file or directory")
    sp.add_argument("--meshes", help="directory of <scene_id>.ply meshes")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("jitter", help="turn ground-truth boxes into jittered weak labels")
    sp.add_argument("--boxes", required=True)
    sp.add_argument("--error-rate", type=float, default=0.1)
    sp.add_argument("--mode", choices=("axis", "ball"), default="axis")
    sp.add_argument("--scene-id")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_jitter)

    sp = sub.add_parser("augment", help="oversample/copy-paste small and scarce objects")
    common(sp)
    sp.add_argument("--scenes", required=True, help="directory written by `generate`")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("stats", help="per-category object counts and mean point counts")
    sp.add_argument("--scenes", required=True)
    sp.add_argument("--out", help="also write the statistics as JSON")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("synth", help="write box-assembled templates for every category")
    sp.add_argument("--out", required=True)
    sp.add_argument("--variants", type=int, default=2)
    sp.add_argument("--points", type=int, default=2000)
    sp.add_argument("--categories", nargs="*")
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
