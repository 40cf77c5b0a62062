"""Dataset emission for the scene benchmark: images, graphs, and a manifest.

The manifest is line-delimited: one header object recording the seed, sizes,
palette, and category counts, then one record per sample with file paths,
object kinds, the per-sample seed offset, and the image checksum. Every
sample is regenerable from (seed, index) alone.
"""

from __future__ import annotations

import hashlib
import json
import math
import pathlib

import numpy as np

from ..graph import MISSING, PoseGraph, load_graphs, save_graphs
from ..rng import STREAM_MASKING, STREAM_SCENES, substream
from .objects import SceneSpec, sample_scene, validate_sample, validate_scene
from .palette import COLOR_NAMES, KINDS, NODE_CLASSES, PALETTE
from .render import render_scene, save_image_png


def mask_attributes(
    g: PoseGraph, node_frac: float = 0.10, sample_prob: float = 0.50, rng=None
) -> PoseGraph:
    """With probability sample_prob, blank the semantic attributes of
    ceil(node_frac * n) randomly chosen nodes; positions are never touched."""
    if rng is None:
        raise ValueError("an rng is required")
    out = g.copy()
    if sample_prob <= 0.0 or rng.random() >= sample_prob:
        return out
    k = math.ceil(node_frac * g.n_nodes)
    picks = rng.choice(g.n_nodes, size=min(k, g.n_nodes), replace=False)
    out.attrs[picks, :] = MISSING
    return out


def _sha256(path) -> str:
    return hashlib.sha256(pathlib.Path(path).read_bytes()).hexdigest()


def gen_pro_dataset(
    count: int,
    seed: int,
    image_size: int,
    out_dir,
    kinds: list[str] | None = None,
    progress=None,
) -> pathlib.Path:
    """Emit `count` (image, graph) pairs plus the manifest; returns its path."""
    if count < 1:
        raise ValueError("count must be at least 1")
    out = pathlib.Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "graphs").mkdir(parents=True, exist_ok=True)

    records = []
    kind_counts = {k: 0 for k in KINDS}
    object_count_hist = {str(i): 0 for i in range(1, 5)}
    for i in range(count):
        rng = substream(seed, STREAM_SCENES, i)
        spec = sample_scene(rng, image_size=image_size, kinds=kinds)
        violations = validate_scene(spec)
        if violations:
            raise RuntimeError(f"sample {i} violates constraints: {violations}")
        image_path = out / "images" / f"{i:06d}.png"
        graph_path = out / "graphs" / f"{i:06d}.json"
        save_image_png(render_scene(spec), image_path)
        save_graphs([spec.to_graph()], graph_path)
        sample_kinds = [obj.kind for obj in spec.objects]
        for k in sample_kinds:
            kind_counts[k] += 1
        object_count_hist[str(len(spec.objects))] += 1
        records.append(
            {
                "index": i,
                "image": f"images/{i:06d}.png",
                "graph": f"graphs/{i:06d}.json",
                "kinds": sample_kinds,
                "seed_offset": i,
                "sha256": _sha256(image_path),
                "split": "train",
            }
        )
        if progress is not None:
            progress(i)

    header = {
        "kind": "pro-manifest",
        "count": count,
        "seed": seed,
        "image_size": image_size,
        "palette": {name: list(rgb) for name, rgb in PALETTE},
        "node_classes": NODE_CLASSES,
        "color_names": COLOR_NAMES,
        "allowed_kinds": list(kinds) if kinds else list(KINDS),
        "kind_counts": kind_counts,
        "object_count_hist": object_count_hist,
    }
    manifest = out / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fp:
        fp.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fp.write(json.dumps(rec, sort_keys=True) + "\n")
    return manifest


def read_manifest(path) -> tuple[dict, list[dict]]:
    with open(path, "r", encoding="utf-8") as fp:
        lines = [json.loads(line) for line in fp if line.strip()]
    if not lines or lines[0].get("kind") != "pro-manifest":
        raise ValueError("not a dataset manifest")
    return lines[0], lines[1:]


def validate_dataset(manifest_path) -> list[str]:
    """Re-run the structural validator over every stored sample."""
    root = pathlib.Path(manifest_path).parent
    _, records = read_manifest(manifest_path)
    out = []
    for rec in records:
        (g,) = load_graphs(root / rec["graph"])
        for v in validate_sample(g, rec["kinds"]):
            out.append(f"sample {rec['index']}: {v}")
    return out
