"""Fixed vocabularies for the synthetic scene benchmark: colors, node classes,
object kinds. These values are part of the dataset format contract and are
recorded in every manifest."""

PALETTE: list[tuple[str, tuple[float, float, float]]] = [
    ("red", (0.90, 0.10, 0.10)),
    ("green", (0.10, 0.75, 0.20)),
    ("blue", (0.15, 0.35, 0.95)),
    ("yellow", (0.95, 0.85, 0.10)),
    ("magenta", (0.85, 0.15, 0.85)),
    ("cyan", (0.10, 0.85, 0.85)),
    ("orange", (0.95, 0.55, 0.10)),
    ("white", (0.95, 0.95, 0.95)),
]

COLOR_NAMES = [name for name, _ in PALETTE]
COLOR_VALUES = [rgb for _, rgb in PALETTE]

NODE_CLASSES = [
    "center",
    "tip",
    "pivot",
    "blade",
    "handle",
    "wrist",
    "finger",
    "base",
    "arm",
    "prong",
    "vertex",
    "p_center",
    "l_vertex",
]
CLASS_ID = {name: i for i, name in enumerate(NODE_CLASSES)}

KINDS = [
    "pie",
    "scissors",
    "hand",
    "robotic_arm",
    "hollow_polygon",
    "filled_polygon",
    "lattice",
]

# geometry constants, in canvas-normalized units at the reference 128px size
STROKE_HALF_WIDTH = 1.0 / 128.0  # 2 px wide strokes at 128x128
LATTICE_DOT_RADIUS = 2.0 / 128.0
LATTICE_EDGE_MAX_DIST = 0.2  # edge iff node distance < 20% of image width
