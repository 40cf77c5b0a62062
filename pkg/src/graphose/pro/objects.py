"""Constraint-respecting samplers for the scene benchmark's object families.

Each sampler proposes geometry inside a placement region and retries until the
family's structural constraints hold; `validate_object` re-checks the same
constraints from the node/edge data alone, so datasets can be audited after
the fact without the sampler state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..graph import PoseGraph, canonical_edges
from .palette import CLASS_ID, KINDS, LATTICE_EDGE_MAX_DIST, NODE_CLASSES

MAX_RETRIES = 120

PIE_MAX_ANGLE = math.radians(135.0)
SCISSOR_MIN_ANGLE = math.radians(30.0)
SCISSOR_MAX_ANGLE = math.radians(90.0)
HAND_MAX_PHALANX_ANGLE = math.radians(35.0)
ARM_MAX_TURN = math.radians(40.0)
ANGLE_TOL = 1e-9


class InfeasibleRegion(RuntimeError):
    """Raised when an object cannot be placed within its region."""


@dataclass(frozen=True)
class Region:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def scale(self) -> float:
        return min(self.width, self.height)

    def contains(self, pts: np.ndarray, pad: float = 0.0) -> bool:
        return bool(
            (pts[:, 0] >= self.x0 + pad).all()
            and (pts[:, 0] <= self.x1 - pad).all()
            and (pts[:, 1] >= self.y0 + pad).all()
            and (pts[:, 1] <= self.y1 - pad).all()
        )


@dataclass
class SceneObject:
    kind: str
    positions: np.ndarray  # (n, 2) canvas-normalized
    classes: np.ndarray  # (n,) ids into NODE_CLASSES
    colors: np.ndarray  # (n,) ids into PALETTE
    edges: np.ndarray  # (m, 2)


@dataclass
class SceneSpec:
    objects: list[SceneObject] = field(default_factory=list)
    image_size: int = 128

    def to_graph(self) -> PoseGraph:
        pos, attrs, obj_ids, edges = [], [], [], []
        offset = 0
        for i, obj in enumerate(self.objects):
            pos.append(obj.positions)
            attrs.append(np.stack([obj.classes, obj.colors], axis=1))
            obj_ids.append(np.full(len(obj.positions), i, dtype=np.int64))
            edges.append(obj.edges + offset)
            offset += len(obj.positions)
        return PoseGraph.create(
            np.concatenate(pos),
            attrs=np.concatenate(attrs),
            edges=canonical_edges(np.concatenate(edges)),
            object_id=np.concatenate(obj_ids),
        )


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _angle_between(u: np.ndarray, v: np.ndarray) -> float:
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    c = float(np.dot(u, v) / (nu * nv))
    return math.acos(min(1.0, max(-1.0, c)))


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _sample_pie(region: Region, rng) -> SceneObject:
    radius = rng.uniform(0.30, 0.46) * region.scale
    cx = rng.uniform(region.x0 + radius, region.x1 - radius)
    cy = rng.uniform(region.y0 + radius, region.y1 - radius)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    for _ in range(MAX_RETRIES):
        inner = rng.uniform(math.radians(20.0), math.pi)
        if inner <= PIE_MAX_ANGLE:
            break
    else:
        raise InfeasibleRegion("pie angle")
    center = np.array([cx, cy])
    tips = [center + radius * _unit(theta), center + radius * _unit(theta + inner)]
    color = int(rng.integers(0, 8))
    return SceneObject(
        kind="pie",
        positions=np.array([center, tips[0], tips[1]]),
        classes=np.array([CLASS_ID["center"], CLASS_ID["tip"], CLASS_ID["tip"]]),
        colors=np.full(3, color),
        edges=np.array([[0, 1], [0, 2]]),
    )


def _sample_scissors(region: Region, rng) -> SceneObject:
    gamma = rng.uniform(SCISSOR_MIN_ANGLE, SCISSOR_MAX_ANGLE)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    blade_len = rng.uniform(0.28, 0.40) * region.scale
    handle_len = rng.uniform(0.55, 0.80) * blade_len
    pivot = np.array(
        [
            rng.uniform(region.x0 + 0.42 * region.width, region.x1 - 0.42 * region.width),
            rng.uniform(region.y0 + 0.42 * region.height, region.y1 - 0.42 * region.height),
        ]
    )
    blades = [pivot + blade_len * _unit(theta - gamma / 2), pivot + blade_len * _unit(theta + gamma / 2)]
    handles = [
        pivot + handle_len * _unit(theta + math.pi - gamma / 2),
        pivot + handle_len * _unit(theta + math.pi + gamma / 2),
    ]
    blade_color = int(rng.integers(0, 8))
    handle_color = int(rng.integers(0, 8))
    pts = np.array([pivot, blades[0], blades[1], handles[0], handles[1]])
    return SceneObject(
        kind="scissors",
        positions=pts,
        classes=np.array(
            [
                CLASS_ID["pivot"],
                CLASS_ID["blade"],
                CLASS_ID["blade"],
                CLASS_ID["handle"],
                CLASS_ID["handle"],
            ]
        ),
        colors=np.array([blade_color, blade_color, blade_color, handle_color, handle_color]),
        edges=np.array([[0, 1], [0, 2], [0, 3], [0, 4]]),
    )


def _sample_hand(region: Region, rng) -> SceneObject:
    chirality = 1.0 if rng.random() < 0.5 else -1.0
    scale = rng.uniform(0.55, 0.80) * region.scale
    theta = rng.uniform(0.0, 2.0 * math.pi)
    wrist = np.array(
        [
            rng.uniform(region.x0 + 0.45 * region.width, region.x1 - 0.45 * region.width),
            rng.uniform(region.y0 + 0.45 * region.height, region.y1 - 0.45 * region.height),
        ]
    )
    spreads = np.radians([-52.0, -24.0, 0.0, 21.0, 42.0]) * chirality
    lengths = np.array([0.52, 0.90, 1.00, 0.93, 0.74]) * scale * 0.5
    pos = [wrist]
    classes = [CLASS_ID["wrist"]]
    colors = [int(rng.integers(0, 8))]
    edges = []
    for f in range(5):
        direction = theta + spreads[f] + rng.uniform(-0.08, 0.08)
        seg = lengths[f] * np.array([0.5, 0.3, 0.2])
        prev = 0  # wrist index
        point = wrist
        color = int(rng.integers(0, 8))
        for p in range(3):
            direction += 0.0 if p == 0 else rng.uniform(-0.8, 0.8) * HAND_MAX_PHALANX_ANGLE
            point = point + seg[p] * _unit(direction)
            pos.append(point)
            classes.append(CLASS_ID["finger"])
            colors.append(color)
            edges.append((prev, len(pos) - 1))
            prev = len(pos) - 1
    return SceneObject(
        kind="hand",
        positions=np.array(pos),
        classes=np.array(classes),
        colors=np.array(colors),
        edges=np.array(edges),
    )


def _sample_robotic_arm(region: Region, rng) -> SceneObject:
    n_seg = int(rng.integers(3, 8))
    base = np.array(
        [
            rng.uniform(region.x0 + 0.30 * region.width, region.x1 - 0.30 * region.width),
            region.y1 - 0.08 * region.height,
        ]
    )
    reach = 0.80 * region.scale
    seg_len = reach / n_seg
    direction = -math.pi / 2 + rng.uniform(-0.5, 0.5)
    pos = [base]
    classes = [CLASS_ID["base"]]
    arm_color = int(rng.integers(0, 8))
    colors = [arm_color]
    edges = []
    point = base
    for s in range(n_seg):
        if s > 0:
            direction += rng.uniform(-0.9, 0.9) * ARM_MAX_TURN
        point = point + seg_len * rng.uniform(0.75, 1.05) * _unit(direction)
        pos.append(point)
        classes.append(CLASS_ID["arm"])
        colors.append(arm_color)
        edges.append((len(pos) - 2, len(pos) - 1))
    prong_color = int(rng.integers(0, 8))
    last = len(pos) - 1
    for side in (-1.0, 1.0):
        prong_dir = direction + side * rng.uniform(math.radians(25.0), math.radians(55.0))
        pos.append(point + 0.45 * seg_len * _unit(prong_dir))
        classes.append(CLASS_ID["prong"])
        colors.append(prong_color)
        edges.append((last, len(pos) - 1))
    return SceneObject(
        kind="robotic_arm",
        positions=np.array(pos),
        classes=np.array(classes),
        colors=np.array(colors),
        edges=np.array(edges),
    )


def _sample_polygon(region: Region, rng, filled: bool, force_vertices: int | None = None) -> SceneObject:
    k = force_vertices if force_vertices is not None else int(rng.integers(3, 9))
    radius = rng.uniform(0.30, 0.46) * region.scale
    cx = rng.uniform(region.x0 + radius, region.x1 - radius)
    cy = rng.uniform(region.y0 + radius, region.y1 - radius)
    rot = rng.uniform(0.0, 2.0 * math.pi)
    color = int(rng.integers(0, 8))
    pts = [
        np.array([cx, cy]) + radius * _unit(rot + 2.0 * math.pi * i / k) for i in range(k)
    ]
    edges = [(i, (i + 1) % k) for i in range(k)]
    classes = [CLASS_ID["vertex"]] * k
    if filled:
        pts.append(np.array([cx, cy]))
        classes.append(CLASS_ID["p_center"])
        edges.extend((i, k) for i in range(k))
    return SceneObject(
        kind="filled_polygon" if filled else "hollow_polygon",
        positions=np.array(pts),
        classes=np.array(classes),
        colors=np.full(len(pts), color),
        edges=np.array(edges),
    )


def _sample_lattice(region: Region, rng) -> SceneObject:
    k = int(rng.integers(3, 10))
    min_dist = 0.16 * region.scale
    pad = 0.05 * region.scale
    pts: list[np.ndarray] = []
    for _ in range(400):
        if len(pts) == k:
            break
        cand = np.array(
            [
                rng.uniform(region.x0 + pad, region.x1 - pad),
                rng.uniform(region.y0 + pad, region.y1 - pad),
            ]
        )
        if all(np.linalg.norm(cand - p) >= min_dist for p in pts):
            pts.append(cand)
    if len(pts) < k:
        raise InfeasibleRegion("lattice points")
    pos = np.array(pts)
    edges = [
        (i, j)
        for i in range(k)
        for j in range(i + 1, k)
        if np.linalg.norm(pos[i] - pos[j]) < LATTICE_EDGE_MAX_DIST
    ]
    return SceneObject(
        kind="lattice",
        positions=pos,
        classes=np.full(k, CLASS_ID["l_vertex"]),
        colors=rng.integers(0, 8, size=k),
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
    )


_SAMPLERS = {
    "pie": _sample_pie,
    "scissors": _sample_scissors,
    "hand": _sample_hand,
    "robotic_arm": _sample_robotic_arm,
    "hollow_polygon": lambda r, g: _sample_polygon(r, g, filled=False),
    "filled_polygon": lambda r, g: _sample_polygon(r, g, filled=True),
    "lattice": _sample_lattice,
}


def sample_object(kind: str, region: Region, rng, max_retries: int = MAX_RETRIES) -> SceneObject:
    """Draw one object of the given kind whose constraints all hold."""
    if kind not in _SAMPLERS:
        raise ValueError(f"unknown object kind {kind!r}")
    for _ in range(max_retries):
        obj = _SAMPLERS[kind](region, rng)
        if not validate_object(obj) and region.contains(obj.positions, pad=0.01):
            return obj
    raise InfeasibleRegion(f"could not place {kind} after {max_retries} attempts")


def regions_for(count: int, rng) -> list[Region]:
    """Placement boxes: full canvas, halves, or quadrants, with margins."""
    m = 0.04
    if count == 1:
        return [Region(m, m, 1 - m, 1 - m)]
    if count == 2:
        if rng.random() < 0.5:
            return [Region(m, m, 0.5 - m / 2, 1 - m), Region(0.5 + m / 2, m, 1 - m, 1 - m)]
        return [Region(m, m, 1 - m, 0.5 - m / 2), Region(m, 0.5 + m / 2, 1 - m, 1 - m)]
    quads = [
        Region(m, m, 0.5 - m / 2, 0.5 - m / 2),
        Region(0.5 + m / 2, m, 1 - m, 0.5 - m / 2),
        Region(m, 0.5 + m / 2, 0.5 - m / 2, 1 - m),
        Region(0.5 + m / 2, 0.5 + m / 2, 1 - m, 1 - m),
    ]
    picks = rng.permutation(4)[:count]
    return [quads[i] for i in picks]


def sample_scene(rng, image_size: int = 128, kinds: list[str] | None = None) -> SceneSpec:
    """One scene: 1..4 objects, kinds uniform over the allowed list."""
    pool = list(kinds) if kinds else list(KINDS)
    for k in pool:
        if k not in KINDS:
            raise ValueError(f"unknown object kind {k!r}")
    count = int(rng.integers(1, 5))
    spec = SceneSpec(image_size=image_size)
    for region in regions_for(count, rng):
        kind = pool[int(rng.integers(0, len(pool)))]
        spec.objects.append(sample_object(kind, region, rng))
    return spec


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _check_pie(pos, classes, colors, edge_set):
    out = []
    if [NODE_CLASSES[c] for c in classes] != ["center", "tip", "tip"]:
        out.append("pie classes")
    if len(set(colors)) != 1:
        out.append("pie colors differ")
    if edge_set != {(0, 1), (0, 2)}:
        out.append("pie connectivity")
    r1 = np.linalg.norm(pos[1] - pos[0])
    r2 = np.linalg.norm(pos[2] - pos[0])
    if abs(r1 - r2) > 1e-9:
        out.append("pie tips not equidistant")
    if _angle_between(pos[1] - pos[0], pos[2] - pos[0]) > PIE_MAX_ANGLE + ANGLE_TOL:
        out.append("pie angle above limit")
    return out


def _check_scissors(pos, classes, colors, edge_set):
    out = []
    names = [NODE_CLASSES[c] for c in classes]
    if names != ["pivot", "blade", "blade", "handle", "handle"]:
        out.append("scissors classes")
    if colors[1] != colors[2]:
        out.append("blade colors differ")
    if colors[3] != colors[4]:
        out.append("handle colors differ")
    if edge_set != {(0, 1), (0, 2), (0, 3), (0, 4)}:
        out.append("scissors connectivity")
    blade_angle = _angle_between(pos[1] - pos[0], pos[2] - pos[0])
    handle_angle = _angle_between(pos[3] - pos[0], pos[4] - pos[0])
    if not (SCISSOR_MIN_ANGLE - ANGLE_TOL <= blade_angle <= SCISSOR_MAX_ANGLE + ANGLE_TOL):
        out.append("blade angle out of range")
    if abs(blade_angle - handle_angle) > 1e-6:
        out.append("blade/handle angles differ")
    return out


def _check_hand(pos, classes, colors, edge_set):
    out = []
    names = [NODE_CLASSES[c] for c in classes]
    if len(pos) != 16 or names[0] != "wrist" or any(n != "finger" for n in names[1:]):
        out.append("hand classes")
        return out
    for f in range(5):
        a, b, c = 1 + 3 * f, 2 + 3 * f, 3 + 3 * f
        if {(0, a), (a, b), (b, c)} - edge_set:
            out.append(f"finger {f} chain broken")
        if not (colors[a] == colors[b] == colors[c]):
            out.append(f"finger {f} colors differ")
        d1 = pos[a] - pos[0]
        d2 = pos[b] - pos[a]
        d3 = pos[c] - pos[b]
        if _angle_between(d1, d2) > HAND_MAX_PHALANX_ANGLE + ANGLE_TOL:
            out.append(f"finger {f} phalanx 2 bends too far")
        if _angle_between(d2, d3) > HAND_MAX_PHALANX_ANGLE + ANGLE_TOL:
            out.append(f"finger {f} phalanx 3 bends too far")
    return out


def _check_robotic_arm(pos, classes, colors, edge_set):
    out = []
    names = [NODE_CLASSES[c] for c in classes]
    n_arm = names.count("arm")
    if names[0] != "base" or not (3 <= n_arm <= 7) or names.count("prong") != 2:
        out.append("arm structure")
        return out
    if names != ["base"] + ["arm"] * n_arm + ["prong", "prong"]:
        out.append("arm node order")
        return out
    chain = {(i, i + 1) for i in range(n_arm)}
    last = n_arm
    chain |= {(last, n_arm + 1), (last, n_arm + 2)}
    if chain - edge_set:
        out.append("arm connectivity")
    if len(set(colors[: n_arm + 1])) != 1:
        out.append("segment color varies")
    if colors[n_arm + 1] != colors[n_arm + 2]:
        out.append("prong colors differ")
    for s in range(1, n_arm):
        d1 = pos[s] - pos[s - 1]
        d2 = pos[s + 1] - pos[s]
        if _angle_between(d1, d2) > ARM_MAX_TURN + ANGLE_TOL:
            out.append(f"segment {s} turns too far")
    return out


def _check_polygon(pos, classes, colors, edge_set, filled):
    out = []
    names = [NODE_CLASSES[c] for c in classes]
    if filled:
        if names.count("p_center") != 1 or names[-1] != "p_center":
            out.append("filled polygon needs one trailing center node")
            return out
        k = len(pos) - 1
    else:
        if any(n != "vertex" for n in names):
            out.append("polygon classes")
            return out
        k = len(pos)
    if not (3 <= k <= 8):
        out.append("vertex count out of range")
        return out
    if len(set(colors)) != 1:
        out.append("polygon colors differ")
    ring = {(min(i, (i + 1) % k), max(i, (i + 1) % k)) for i in range(k)}
    want = ring | ({(i, k) for i in range(k)} if filled else set())
    if want != edge_set:
        out.append("polygon connectivity")
    center = pos[-1] if filled else pos[:k].mean(axis=0)
    radii = np.linalg.norm(pos[:k] - center, axis=1)
    if radii.max() - radii.min() > 1e-6:
        out.append("polygon not regular")
    return out


def _check_lattice(pos, classes, colors, edge_set):
    out = []
    if not (3 <= len(pos) <= 9):
        out.append("lattice node count out of range")
    if any(NODE_CLASSES[c] != "l_vertex" for c in classes):
        out.append("lattice classes")
    want = {
        (i, j)
        for i in range(len(pos))
        for j in range(i + 1, len(pos))
        if np.linalg.norm(pos[i] - pos[j]) < LATTICE_EDGE_MAX_DIST
    }
    if want != edge_set:
        out.append("lattice edges violate the distance rule")
    return out


def validate_object(obj: SceneObject) -> list[str]:
    """Every violated structural constraint for one object (empty means ok)."""
    edge_set = {(min(a, b), max(a, b)) for a, b in obj.edges.tolist()}
    args = (obj.positions, obj.classes.tolist(), obj.colors.tolist(), edge_set)
    checks = {
        "pie": _check_pie,
        "scissors": _check_scissors,
        "hand": _check_hand,
        "robotic_arm": _check_robotic_arm,
        "hollow_polygon": lambda *a: _check_polygon(*a, filled=False),
        "filled_polygon": lambda *a: _check_polygon(*a, filled=True),
        "lattice": _check_lattice,
    }
    out = checks[obj.kind](*args)
    if not ((obj.positions >= 0.0).all() and (obj.positions <= 1.0).all()):
        out.append("positions escape the canvas")
    return out


def validate_scene(spec: SceneSpec) -> list[str]:
    out = []
    if not (1 <= len(spec.objects) <= 4):
        out.append("object count out of range")
    for i, obj in enumerate(spec.objects):
        out.extend(f"object {i} ({obj.kind}): {v}" for v in validate_object(obj))
    return out


def objects_from_graph(g: PoseGraph, kinds: list[str]) -> list[SceneObject]:
    """Reassemble per-object records from a stored scene graph."""
    objs = []
    for i, kind in enumerate(kinds):
        idx = np.nonzero(g.object_id == i)[0]
        remap = {int(old): new for new, old in enumerate(idx)}
        edges = [
            [remap[int(a)], remap[int(b)]]
            for a, b in g.edges
            if int(a) in remap and int(b) in remap
        ]
        objs.append(
            SceneObject(
                kind=kind,
                positions=g.positions[idx],
                classes=g.attrs[idx, 0],
                colors=g.attrs[idx, 1],
                edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
            )
        )
    return objs


def validate_sample(g: PoseGraph, kinds: list[str]) -> list[str]:
    """Constraint audit of a stored (graph, kinds) pair."""
    out = []
    if not (1 <= len(kinds) <= 4):
        out.append("object count out of range")
    for i, obj in enumerate(objects_from_graph(g, kinds)):
        out.extend(f"object {i} ({obj.kind}): {v}" for v in validate_object(obj))
    return out
