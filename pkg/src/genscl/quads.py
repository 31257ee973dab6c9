"""Quadrilateral shape domain: category exemplar generators, the 22-bit
geometric feature encoding, Beta-Bernoulli similarity kernels, and oddball
trial synthesis.

Eleven categories are supported, from square (most regular) down to random
(no regularities).  Each category has a parametric construction that realizes
exactly its defining predicates; the per-category regularity counts (right
angles, parallels, symmetry, equal sides, equal angles) are kept as an
authoritative lookup table used for regularity ranking.

Feature bits are a function of the stored vertex order (index 0 is vertex 0).
Exemplar constructors return canonically ordered vertices (lowest, then
leftmost, first; counterclockwise), and similarity transforms preserve the
stored order, so feature vectors are stable across transformed copies of one
shape.  Relabeling the same polygon cyclically permutes the bits; apply
``canonicalize`` first to compare shapes irrespective of labeling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import betaln

from .errors import ConstructionFailureError
from .raster import rasterize_polylines

__all__ = [
    "CATEGORY_NAMES",
    "QuadCategory",
    "Quadrilateral",
    "GeometricFeatureVector",
    "BetaBernoulliParams",
    "OddballTrial",
    "ExtractionTolerances",
    "STRICT_TOLERANCES",
    "LOOSE_TOLERANCES",
    "EDGE_PAIRS",
    "category",
    "all_categories",
    "regularity_total",
    "canonicalize",
    "generate_exemplar",
    "apply_transform",
    "extract_features",
    "expected_feature_bits",
    "shape_log_gen_sim_general",
    "shape_log_gen_sim_limit",
    "feature_sq_distance",
    "make_oddball_trial",
    "rasterize_quad",
    "category_process",
]

# Regularity counts per category: (rightAngles, parallels, symmetry,
# equalSides, equalAngles), ordered from most to least regular.
_REGULARITY_ROWS: dict[str, tuple[int, int, int, int, int]] = {
    "square": (4, 2, 4, 4, 4),
    "rectangle": (4, 2, 2, 2, 4),
    "losange": (0, 0, 2, 4, 2),
    "parallelogram": (0, 2, 1, 2, 2),
    "rightKite": (2, 0, 1, 2, 2),
    "kite": (0, 0, 1, 2, 2),
    "isoTrapezoid": (0, 1, 1, 1, 2),
    "hinge": (1, 0, 0, 1, 0),
    "rustedHinge": (0, 0, 0, 1, 0),
    "trapezoid": (0, 1, 0, 0, 0),
    "random": (0, 0, 0, 0, 0),
}

CATEGORY_NAMES: tuple[str, ...] = tuple(_REGULARITY_ROWS)

# Lexicographic pair order shared by the side-equality, angle-equality and
# parallelism bit groups.
EDGE_PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

_RUSTED_HINGE_OFFSET = math.radians(10.0)


@dataclass(frozen=True)
class QuadCategory:
    """A named quadrilateral category and its regularity-count row."""

    name: str
    regularity_row: tuple[int, int, int, int, int]

    def __post_init__(self):
        if self.name not in _REGULARITY_ROWS:
            raise ValueError(f"unknown category {self.name!r}")
        if tuple(self.regularity_row) != _REGULARITY_ROWS[self.name]:
            raise ValueError(f"regularity row does not match the table for {self.name!r}")


def category(name: str) -> QuadCategory:
    """Look up a category by name."""
    if name not in _REGULARITY_ROWS:
        raise ValueError(f"unknown category {name!r}; expected one of {CATEGORY_NAMES}")
    return QuadCategory(name, _REGULARITY_ROWS[name])


def all_categories() -> tuple[QuadCategory, ...]:
    """All 11 categories, most regular first."""
    return tuple(category(n) for n in CATEGORY_NAMES)


def regularity_total(cat: QuadCategory | str) -> int:
    """Sum of the five regularity counts, the scalar regularity measure."""
    name = cat if isinstance(cat, str) else cat.name
    return sum(_REGULARITY_ROWS[name])


@dataclass(frozen=True)
class Quadrilateral:
    """Simple counterclockwise quadrilateral; vertex order is meaningful."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) != 4:
            raise ValueError("a quadrilateral needs exactly 4 vertices")
        arr = np.asarray(verts, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("vertices must be finite")
        if _signed_area(arr) <= 0:
            raise ValueError("vertices must be in counterclockwise order (positive area)")
        if not _is_simple(arr):
            raise ValueError("quadrilateral must be simple (non-self-intersecting)")
        scale = float(np.max(np.abs(arr - arr.mean(axis=0)))) or 1.0
        for i in range(4):
            for j in range(i + 1, 4):
                for k in range(j + 1, 4):
                    if abs(_cross(arr[j] - arr[i], arr[k] - arr[i])) <= 1e-9 * scale * scale:
                        raise ValueError("no three vertices may be collinear")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def centroid(self) -> np.ndarray:
        return self.as_array().mean(axis=0)

    def bbox_diagonal(self) -> float:
        arr = self.as_array()
        return float(np.linalg.norm(arr.max(axis=0) - arr.min(axis=0)))


def _signed_area(arr: np.ndarray) -> float:
    x, y = arr[:, 0], arr[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _segments_cross(p1, p2, p3, p4) -> bool:
    d1 = _cross(p4 - p3, p1 - p3)
    d2 = _cross(p4 - p3, p2 - p3)
    d3 = _cross(p2 - p1, p3 - p1)
    d4 = _cross(p2 - p1, p4 - p1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _is_simple(arr: np.ndarray) -> bool:
    # Only the two non-adjacent edge pairs can cross in a quadrilateral.
    return not (
        _segments_cross(arr[0], arr[1], arr[2], arr[3])
        or _segments_cross(arr[1], arr[2], arr[3], arr[0])
    )


def canonicalize(quad: Quadrilateral) -> Quadrilateral:
    """Rotate the vertex labels so the lowest (then leftmost) vertex is first."""
    arr = quad.as_array()
    start = min(range(4), key=lambda i: (arr[i, 1], arr[i, 0]))
    order = [(start + i) % 4 for i in range(4)]
    return Quadrilateral(tuple(quad.vertices[i] for i in order))


@dataclass(frozen=True)
class ExtractionTolerances:
    """Tolerances for the binary geometric predicates.

    rel_length: relative tolerance for edge-length equality.
    angle: absolute tolerance in radians for angle equality, right angles,
        and edge parallelism.
    """

    rel_length: float = 1e-6
    angle: float = 1e-6


STRICT_TOLERANCES = ExtractionTolerances()
# For perturbed or hand-drawn inputs where exact constructions do not apply.
LOOSE_TOLERANCES = ExtractionTolerances(rel_length=1e-2, angle=1e-2)


@dataclass(frozen=True)
class GeometricFeatureVector:
    """22 binary geometric predicates of a quadrilateral.

    Bit layout: 6 edge-length equalities, 6 angle equalities, 6 edge
    parallelisms (pairs in lexicographic order (0,1),(0,2),(0,3),(1,2),
    (1,3),(2,3)), then 4 right-angle flags, one per vertex.
    """

    bits: tuple[bool, ...]

    def __post_init__(self):
        bits = tuple(bool(b) for b in self.bits)
        object.__setattr__(self, "bits", bits)
        if len(bits) != 22:
            raise ValueError(f"feature vector must have 22 bits, got {len(bits)}")

    def to_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=float)

    @property
    def side_equalities(self) -> tuple[bool, ...]:
        return self.bits[0:6]

    @property
    def angle_equalities(self) -> tuple[bool, ...]:
        return self.bits[6:12]

    @property
    def parallelisms(self) -> tuple[bool, ...]:
        return self.bits[12:18]

    @property
    def right_angles(self) -> tuple[bool, ...]:
        return self.bits[18:22]


@dataclass(frozen=True)
class BetaBernoulliParams:
    """Beta prior parameters for the per-feature Bernoulli rates."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")


@dataclass(frozen=True)
class OddballTrial:
    """Six items: five transforms of one reference plus one perturbed oddball."""

    items: tuple[Quadrilateral, ...]
    oddball_index: int
    category: QuadCategory

    def __post_init__(self):
        if len(self.items) != 6:
            raise ValueError("a trial has exactly 6 items")
        if not 0 <= self.oddball_index < 6:
            raise ValueError("oddball_index must be in 0..5")


def _interior_angles(arr: np.ndarray) -> np.ndarray:
    """Interior angle at each vertex of a ccw simple polygon, in (0, 2*pi)."""
    edges = np.roll(arr, -1, axis=0) - arr
    angles = np.empty(4)
    for i in range(4):
        prev = edges[(i - 1) % 4]
        cur = edges[i]
        turn = math.atan2(_cross(prev, cur), float(np.dot(prev, cur)))
        angles[i] = math.pi - turn
    return angles


def extract_features(
    quad: Quadrilateral, tol: ExtractionTolerances = STRICT_TOLERANCES
) -> GeometricFeatureVector:
    """Evaluate the 22 geometric predicates on the stored vertex order."""
    arr = quad.as_array()
    edges = np.roll(arr, -1, axis=0) - arr
    lengths = np.linalg.norm(edges, axis=1)
    angles = _interior_angles(arr)
    units = edges / lengths[:, None]

    side_eq = [
        abs(lengths[i] - lengths[j]) <= tol.rel_length * max(lengths[i], lengths[j])
        for i, j in EDGE_PAIRS
    ]
    angle_eq = [abs(angles[i] - angles[j]) <= tol.angle for i, j in EDGE_PAIRS]
    sin_tol = math.sin(min(tol.angle, math.pi / 2))
    parallel = [abs(_cross(units[i], units[j])) <= sin_tol for i, j in EDGE_PAIRS]
    right = [abs(angles[i] - math.pi / 2) <= tol.angle for i in range(4)]
    return GeometricFeatureVector(tuple(side_eq + angle_eq + parallel + right))


def _bits(side: Sequence[int], angle: Sequence[int], par: Sequence[int], right: Sequence[int]):
    return GeometricFeatureVector(tuple(bool(b) for b in (*side, *angle, *par, *right)))


# Target bit patterns for canonically ordered exemplars of each category.
_EXPECTED_BITS: dict[str, GeometricFeatureVector] = {
    "square": _bits([1] * 6, [1] * 6, [0, 1, 0, 0, 1, 0], [1] * 4),
    "rectangle": _bits([0, 1, 0, 0, 1, 0], [1] * 6, [0, 1, 0, 0, 1, 0], [1] * 4),
    "losange": _bits([1] * 6, [0, 1, 0, 0, 1, 0], [0, 1, 0, 0, 1, 0], [0] * 4),
    "parallelogram": _bits([0, 1, 0, 0, 1, 0], [0, 1, 0, 0, 1, 0], [0, 1, 0, 0, 1, 0], [0] * 4),
    "rightKite": _bits([0, 0, 1, 1, 0, 0], [0, 0, 0, 0, 1, 0], [0] * 6, [0, 1, 0, 1]),
    "kite": _bits([0, 0, 1, 1, 0, 0], [0, 0, 0, 0, 1, 0], [0] * 6, [0] * 4),
    "isoTrapezoid": _bits([0, 0, 0, 0, 1, 0], [1, 0, 0, 0, 0, 1], [0, 1, 0, 0, 0, 0], [0] * 4),
    "hinge": _bits([0, 0, 1, 0, 0, 0], [0] * 6, [0] * 6, [1, 0, 0, 0]),
    "rustedHinge": _bits([0, 0, 1, 0, 0, 0], [0] * 6, [0] * 6, [0] * 4),
    "trapezoid": _bits([0] * 6, [0] * 6, [0, 1, 0, 0, 0, 0], [0] * 4),
    "random": _bits([0] * 6, [0] * 6, [0] * 6, [0] * 4),
}


def expected_feature_bits(cat: QuadCategory | str) -> GeometricFeatureVector:
    """The feature pattern a canonical exemplar of this category realizes."""
    name = cat if isinstance(cat, str) else cat.name
    return _EXPECTED_BITS[name]


def _build_square(rng) -> Quadrilateral:
    s = rng.uniform(0.6, 1.4)
    return Quadrilateral(((0, 0), (s, 0), (s, s), (0, s)))


def _build_rectangle(rng) -> Quadrilateral:
    w = rng.uniform(0.6, 1.0)
    h = w * rng.uniform(1.35, 2.2)
    return Quadrilateral(((0, 0), (w, 0), (w, h), (0, h)))


def _build_losange(rng) -> Quadrilateral:
    s = rng.uniform(0.6, 1.2)
    th = math.radians(rng.uniform(50.0, 75.0))
    c, si = s * math.cos(th), s * math.sin(th)
    return Quadrilateral(((0, 0), (s, 0), (s + c, si), (c, si)))


def _build_parallelogram(rng) -> Quadrilateral:
    a = rng.uniform(0.7, 1.1)
    b = a * rng.uniform(1.4, 2.0)
    th = math.radians(rng.uniform(50.0, 75.0))
    c, si = b * math.cos(th), b * math.sin(th)
    return Quadrilateral(((0, 0), (a, 0), (a + c, si), (c, si)))


def _kite_vertices(p: float, q1: float, q2: float) -> Quadrilateral:
    # Symmetry axis vertical; canonical start is the unique lowest vertex.
    return Quadrilateral(((0, -q1), (p, 0), (0, q2), (-p, 0)))


def _build_kite(rng) -> Quadrilateral:
    p = rng.uniform(0.6, 1.0)
    q1 = p * rng.uniform(0.5, 0.72)
    q2 = q1 * rng.uniform(1.6, 2.3)
    return _kite_vertices(p, q1, q2)


def _build_right_kite(rng) -> Quadrilateral:
    # q1*q2 = p^2 makes the two wing angles right angles.
    p = rng.uniform(0.6, 1.0)
    u = rng.uniform(0.55, 0.8)
    return _kite_vertices(p, p * u, p / u)


def _build_iso_trapezoid(rng) -> Quadrilateral:
    b1 = rng.uniform(1.2, 1.6)
    b2 = b1 * rng.uniform(0.45, 0.7)
    h = rng.uniform(0.5, 0.9)
    return Quadrilateral(((-b1 / 2, 0), (b1 / 2, 0), (b2 / 2, h), (-b2 / 2, h)))


def _hinge_vertices(s: float, x2: float, y2: float, angle: float) -> Quadrilateral:
    v3 = (s * math.cos(angle), s * math.sin(angle))
    return Quadrilateral(((0, 0), (s, 0), (x2, y2), v3))


def _build_hinge(rng) -> Quadrilateral:
    s = rng.uniform(0.8, 1.2)
    x2 = s * rng.uniform(1.15, 1.6)
    y2 = s * rng.uniform(0.35, 0.75)
    return _hinge_vertices(s, x2, y2, math.pi / 2)


def _build_rusted_hinge(rng) -> Quadrilateral:
    s = rng.uniform(0.8, 1.2)
    x2 = s * rng.uniform(1.15, 1.6)
    y2 = s * rng.uniform(0.35, 0.75)
    return _hinge_vertices(s, x2, y2, math.pi / 2 + _RUSTED_HINGE_OFFSET)


def _build_trapezoid(rng) -> Quadrilateral:
    b1 = rng.uniform(1.2, 1.6)
    top = b1 * rng.uniform(0.4, 0.65)
    h = rng.uniform(0.5, 0.9)
    shift = b1 * rng.uniform(0.05, 0.16) * rng.choice((-1.0, 1.0))
    x3 = (b1 - top) / 2 + shift
    return Quadrilateral(((0, 0), (b1, 0), (x3 + top, h), (x3, h)))


def _build_random(rng) -> Quadrilateral:
    pts = rng.uniform(0.0, 1.0, size=(4, 2))
    center = pts.mean(axis=0)
    order = np.argsort(np.arctan2(pts[:, 1] - center[1], pts[:, 0] - center[0]))
    return Quadrilateral(tuple(map(tuple, pts[order])))


_BUILDERS = {
    "square": _build_square,
    "rectangle": _build_rectangle,
    "losange": _build_losange,
    "parallelogram": _build_parallelogram,
    "rightKite": _build_right_kite,
    "kite": _build_kite,
    "isoTrapezoid": _build_iso_trapezoid,
    "hinge": _build_hinge,
    "rustedHinge": _build_rusted_hinge,
    "trapezoid": _build_trapezoid,
    "random": _build_random,
}

_MAX_BUILD_ATTEMPTS = 256


def generate_exemplar(cat: QuadCategory | str, rng: np.random.Generator) -> Quadrilateral:
    """Sample a canonical exemplar realizing exactly the category's predicates.

    Candidates are rejected unless feature extraction reproduces the expected
    bit pattern both at the strict tolerances (the construction is exact) and
    at the loose ones (no near-miss extra regularity), so downstream
    perturbation analysis is robust.
    """
    name = cat if isinstance(cat, str) else cat.name
    if name not in _BUILDERS:
        raise ValueError(f"unknown category {name!r}")
    expected = _EXPECTED_BITS[name]
    builder = _BUILDERS[name]
    for _ in range(_MAX_BUILD_ATTEMPTS):
        try:
            quad = canonicalize(builder(rng))
        except ValueError:
            continue
        if extract_features(quad, STRICT_TOLERANCES) != expected:
            continue
        if extract_features(quad, LOOSE_TOLERANCES) != expected:
            continue
        return quad
    raise ConstructionFailureError(
        f"could not construct a valid {name!r} exemplar in {_MAX_BUILD_ATTEMPTS} attempts"
    )


def apply_transform(quad: Quadrilateral, scale: float, rotation: float) -> Quadrilateral:
    """Rotate and uniformly scale about the vertex centroid, preserving order."""
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    arr = quad.as_array()
    center = arr.mean(axis=0)
    c, s = math.cos(rotation), math.sin(rotation)
    rot = np.array([[c, -s], [s, c]])
    moved = (arr - center) @ rot.T * scale + center
    return Quadrilateral(tuple(map(tuple, moved)))


def _as_binary_array(f) -> np.ndarray:
    if isinstance(f, GeometricFeatureVector):
        return f.to_array()
    arr = np.asarray(f, dtype=float)
    if arr.ndim != 1 or not np.all((arr == 0) | (arr == 1)):
        raise ValueError("features must be a 1-D binary vector")
    return arr


def _binary_pair(f1, f2) -> tuple[np.ndarray, np.ndarray]:
    a1, a2 = _as_binary_array(f1), _as_binary_array(f2)
    if a1.shape != a2.shape:
        raise ValueError("feature vectors must have equal length")
    return a1, a2


def shape_log_gen_sim_general(f1, f2, params: BetaBernoulliParams) -> float:
    """Same/different log-odds for binary features under a Beta-Bernoulli prior.

    Per feature the log-odds is
        log B(f1+f2+a, (1-f1)+(1-f2)+b) + log B(a, b)
        - log B(f1+a, 1-f1+b) - log B(f2+a, 1-f2+b)
    summed over features, evaluated through log-Beta for stability at small
    prior parameters.
    """
    a1, a2 = _binary_pair(f1, f2)
    al, be = params.alpha, params.beta
    joint = betaln(a1 + a2 + al, (1 - a1) + (1 - a2) + be) + betaln(al, be)
    marg = betaln(a1 + al, (1 - a1) + be) + betaln(a2 + al, (1 - a2) + be)
    return float(np.sum(joint - marg))


def shape_log_gen_sim_limit(f1, f2, beta: float) -> float:
    """Small-prior limit: n log 2 - log((beta+1)/beta) * squared feature distance."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    a1, a2 = _binary_pair(f1, f2)
    n = a1.size
    return n * math.log(2.0) - math.log((beta + 1.0) / beta) * float(np.sum((a1 - a2) ** 2))


def feature_sq_distance(f1, f2) -> int:
    """Hamming distance, equal to the squared Euclidean distance for binary bits."""
    a1, a2 = _binary_pair(f1, f2)
    return int(np.sum((a1 - a2) ** 2))


def _lowest_rightmost_index(arr: np.ndarray) -> int:
    return min(range(4), key=lambda i: (arr[i, 1], -arr[i, 0]))


_MAX_ODDBALL_ATTEMPTS = 512
_RANDOM_CATEGORY_MIN_SHIFT = 0.10  # fraction of the bbox diagonal


def make_oddball_trial(
    cat: QuadCategory | str,
    rng: np.random.Generator,
    scale_range: tuple[float, float] = (0.75, 1.3),
    rotation_range: tuple[float, float] = (0.0, 2.0 * math.pi),
) -> OddballTrial:
    """Build a six-item trial: five transforms of a reference plus one oddball.

    The oddball displaces the reference's lowest-rightmost vertex by 5-25% of
    the bounding-box diagonal, resampled until its feature vector differs from
    the reference's in at least one bit at both strict and loose tolerances.
    The random category has an all-false reference vector that no displacement
    can change, so there the displacement only has to exceed a fixed fraction
    of the diagonal.  Every item, the oddball included, gets an independent
    random scale and rotation from the given ranges, and the oddball slot is
    uniform over the six positions.
    """
    cat = category(cat) if isinstance(cat, str) else cat
    reference = generate_exemplar(cat, rng)
    ref_strict = extract_features(reference, STRICT_TOLERANCES)
    ref_loose = extract_features(reference, LOOSE_TOLERANCES)
    diag = reference.bbox_diagonal()
    move_idx = _lowest_rightmost_index(reference.as_array())

    oddball_base = None
    for _ in range(_MAX_ODDBALL_ATTEMPTS):
        magnitude = rng.uniform(0.05, 0.25) * diag
        direction = rng.uniform(0.0, 2.0 * math.pi)
        delta = magnitude * np.array([math.cos(direction), math.sin(direction)])
        verts = [list(v) for v in reference.vertices]
        verts[move_idx][0] += delta[0]
        verts[move_idx][1] += delta[1]
        try:
            candidate = Quadrilateral(tuple(map(tuple, verts)))
        except ValueError:
            continue
        if cat.name == "random":
            if magnitude >= _RANDOM_CATEGORY_MIN_SHIFT * diag:
                oddball_base = candidate
                break
            continue
        if (
            extract_features(candidate, STRICT_TOLERANCES) != ref_strict
            and extract_features(candidate, LOOSE_TOLERANCES) != ref_loose
        ):
            oddball_base = candidate
            break
    if oddball_base is None:
        raise ConstructionFailureError(
            f"no valid oddball perturbation for {cat.name!r} in {_MAX_ODDBALL_ATTEMPTS} attempts"
        )

    def random_transform(q: Quadrilateral) -> Quadrilateral:
        return apply_transform(q, rng.uniform(*scale_range), rng.uniform(*rotation_range))

    copies = [random_transform(reference) for _ in range(5)]
    oddball = random_transform(oddball_base)
    slot = int(rng.integers(0, 6))
    items = copies[:slot] + [oddball] + copies[slot:]
    return OddballTrial(items=tuple(items), oddball_index=slot, category=cat)


def rasterize_quad(quad: Quadrilateral, size: int) -> np.ndarray:
    """Stroke the quadrilateral outline into a size x size [0,1] raster."""
    if size < 16:
        raise ValueError(f"raster size must be >= 16, got {size}")
    arr = quad.as_array()
    closed = np.vstack([arr, arr[:1]])
    return rasterize_polylines([closed], size=size, margin=0.1)


def category_process(
    raster_size: int = 64,
    scale_range: tuple[float, float] = (0.85, 1.15),
    rotation_range: tuple[float, float] = (-0.5, 0.5),
):
    """Hierarchical process over shape categories: draw a category uniformly,
    then a rasterized transformed exemplar of it.

    This is the definite-category limit of the shape generative process; the
    parameter value is the category index.  No density is available, so only
    triplet sampling (not the Monte-Carlo odds estimator) applies.
    """
    from .core import HierarchicalProcess

    def param_sampler(rng: np.random.Generator) -> int:
        return int(rng.integers(0, len(CATEGORY_NAMES)))

    def datum_sampler(theta: int, rng: np.random.Generator) -> np.ndarray:
        exemplar = generate_exemplar(CATEGORY_NAMES[int(theta)], rng)
        shaped = apply_transform(
            exemplar, rng.uniform(*scale_range), rng.uniform(*rotation_range)
        )
        return rasterize_quad(shaped, raster_size)

    return HierarchicalProcess(
        param_sampler=param_sampler,
        datum_sampler=datum_sampler,
        label_of=lambda theta: int(theta),
    )
