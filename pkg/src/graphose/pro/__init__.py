"""Synthetic scene benchmark: object samplers, exact renderer, dataset tools."""

from .dataset import gen_pro_dataset, mask_attributes, read_manifest, validate_dataset
from .objects import (
    InfeasibleRegion,
    Region,
    SceneObject,
    SceneSpec,
    objects_from_graph,
    regions_for,
    sample_object,
    sample_scene,
    validate_object,
    validate_sample,
    validate_scene,
)
from .palette import CLASS_ID, COLOR_NAMES, COLOR_VALUES, KINDS, NODE_CLASSES, PALETTE
from .render import image_to_u8, render_scene, save_image_png

__all__ = [
    "CLASS_ID",
    "COLOR_NAMES",
    "COLOR_VALUES",
    "InfeasibleRegion",
    "KINDS",
    "NODE_CLASSES",
    "PALETTE",
    "Region",
    "SceneObject",
    "SceneSpec",
    "gen_pro_dataset",
    "image_to_u8",
    "mask_attributes",
    "objects_from_graph",
    "read_manifest",
    "regions_for",
    "render_scene",
    "sample_object",
    "sample_scene",
    "save_image_png",
    "validate_dataset",
    "validate_object",
    "validate_sample",
    "validate_scene",
]
