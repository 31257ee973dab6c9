"""Turtle-graphics drawing DSL: weighted grammars, program sampling,
interpretation into stroke paths, rasterization, and program statistics.

Programs are finite trees over three motor primitives (line, arc, turn) and
two control combinators (concat, repeat).  Two builtin grammars share this
inventory and differ only in their weights: the rectilinear style never draws
arcs and only turns in right angles, the curvilinear style is dominated by
arcs with varied sweeps.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .raster import rasterize_polylines

__all__ = [
    "Line",
    "Arc",
    "Turn",
    "Concat",
    "Repeat",
    "Program",
    "Grammar",
    "StrokePath",
    "LineSegment",
    "ArcSegment",
    "builtin_grammar",
    "sample_program",
    "interpret",
    "rasterize_path",
    "count_primitives",
    "mean_grey",
    "style_process",
    "program_depth",
    "to_sexpr",
    "parse_sexpr",
]

REPEAT_MIN, REPEAT_MAX = 2, 9


@dataclass(frozen=True)
class Line:
    length: float

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("line length must be positive")


@dataclass(frozen=True)
class Arc:
    radius: float
    sweep_deg: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("arc radius must be positive")
        if self.sweep_deg == 0:
            raise ValueError("arc sweep must be nonzero")


@dataclass(frozen=True)
class Turn:
    angle_deg: float


@dataclass(frozen=True)
class Concat:
    left: "Program"
    right: "Program"


@dataclass(frozen=True)
class Repeat:
    count: int
    body: "Program"

    def __post_init__(self):
        if not REPEAT_MIN <= self.count <= REPEAT_MAX:
            raise ValueError(f"repeat count must be in {REPEAT_MIN}..{REPEAT_MAX}")


Program = Union[Line, Arc, Turn, Concat, Repeat]

_MOTOR_KINDS = ("line", "arc", "turn")
_ALL_KINDS = ("line", "arc", "turn", "concat", "repeat")


@dataclass(frozen=True)
class Grammar:
    """Weighted productions over the node kinds plus discrete parameter sets.

    Weights are nonnegative (zero disables a production while keeping the
    shared inventory); the motor kinds must carry positive total weight since
    recursion is truncated to them at the depth cap.
    """

    production_weights: Mapping[str, float]
    line_lengths: Mapping[float, float]
    arc_radii: Mapping[float, float]
    arc_sweeps: Mapping[float, float]
    turn_angles: Mapping[float, float]
    depth_cap: int = 6

    def __post_init__(self):
        pw = dict(self.production_weights)
        if set(pw) != set(_ALL_KINDS):
            raise ValueError(f"production weights must cover exactly {_ALL_KINDS}")
        if any(w < 0 for w in pw.values()):
            raise ValueError("production weights must be nonnegative")
        if sum(pw[k] for k in _MOTOR_KINDS) <= 0:
            raise ValueError("at least one motor primitive needs positive weight")
        for name in ("line_lengths", "arc_radii", "arc_sweeps", "turn_angles"):
            table = dict(getattr(self, name))
            if not table or any(w < 0 for w in table.values()) or sum(table.values()) <= 0:
                raise ValueError(f"{name} must be nonempty with positive total weight")
            object.__setattr__(self, name, table)
        object.__setattr__(self, "production_weights", pw)
        if self.depth_cap < 1:
            raise ValueError("depth cap must be >= 1")


_SHARED_PARAMS = {
    "line_lengths": {0.5: 1.0, 1.0: 2.0, 2.0: 1.0},
    "arc_radii": {0.5: 1.0, 1.0: 2.0, 2.0: 1.0},
    "arc_sweeps": {90.0: 1.0, 180.0: 2.0, 270.0: 1.0, 360.0: 1.0},
}


def builtin_grammar(style: str) -> Grammar:
    """Default grammar for one of the two builtin styles.

    ``greek``: no arcs, right-angle turns only, line-heavy.
    ``celtic``: arc-dominated with varied sweeps and a small line weight.
    Both share the same primitive inventory; only weights differ.
    """
    if style == "greek":
        return Grammar(
            production_weights={
                "line": 3.0,
                "arc": 0.0,
                "turn": 2.0,
                "concat": 2.5,
                "repeat": 1.75,
            },
            turn_angles={-135.0: 0.0, -90.0: 2.0, -45.0: 0.0, 45.0: 0.0, 90.0: 2.0, 135.0: 0.0},
            **_SHARED_PARAMS,
        )
    if style == "celtic":
        return Grammar(
            production_weights={
                "line": 0.15,
                "arc": 6.0,
                "turn": 0.15,
                "concat": 3.0,
                "repeat": 1.5,
            },
            turn_angles={-135.0: 1.0, -90.0: 1.0, -45.0: 1.0, 45.0: 1.0, 90.0: 1.0, 135.0: 1.0},
            **_SHARED_PARAMS,
        )
    raise ValueError(f"unknown style {style!r}; expected 'greek' or 'celtic'")


def _weighted_choice(rng: np.random.Generator, table: Mapping) -> object:
    items = [(k, w) for k, w in table.items() if w > 0]
    total = sum(w for _, w in items)
    u = rng.random() * total
    acc = 0.0
    for key, w in items:
        acc += w
        if u < acc:
            return key
    return items[-1][0]


def sample_program(grammar: Grammar, rng: np.random.Generator) -> Program:
    """Sample a program tree top-down by normalized production weights.

    At the depth cap only motor primitives remain available, so every sampled
    tree is finite with depth <= depth_cap.
    """

    def go(depth: int) -> Program:
        weights = dict(grammar.production_weights)
        if depth >= grammar.depth_cap:
            weights = {k: weights[k] for k in _MOTOR_KINDS}
        kind = _weighted_choice(rng, weights)
        if kind == "line":
            return Line(float(_weighted_choice(rng, grammar.line_lengths)))
        if kind == "arc":
            radius = float(_weighted_choice(rng, grammar.arc_radii))
            sweep = float(_weighted_choice(rng, grammar.arc_sweeps))
            return Arc(radius, sweep)
        if kind == "turn":
            return Turn(float(_weighted_choice(rng, grammar.turn_angles)))
        if kind == "concat":
            left = go(depth + 1)
            right = go(depth + 1)
            return Concat(left, right)
        count = int(rng.integers(REPEAT_MIN, REPEAT_MAX + 1))
        return Repeat(count, go(depth + 1))

    return go(1)


@dataclass(frozen=True)
class LineSegment:
    start: tuple[float, float]
    end: tuple[float, float]


@dataclass(frozen=True)
class ArcSegment:
    center: tuple[float, float]
    radius: float
    start_angle: float  # radians, from center to the segment start
    sweep: float  # radians, positive = counterclockwise

    @property
    def start(self) -> tuple[float, float]:
        return (
            self.center[0] + self.radius * math.cos(self.start_angle),
            self.center[1] + self.radius * math.sin(self.start_angle),
        )

    @property
    def end(self) -> tuple[float, float]:
        a = self.start_angle + self.sweep
        return (
            self.center[0] + self.radius * math.cos(a),
            self.center[1] + self.radius * math.sin(a),
        )


Segment = Union[LineSegment, ArcSegment]


@dataclass(frozen=True)
class StrokePath:
    """Connected drawable segments plus the final turtle state."""

    segments: tuple[Segment, ...]
    end_position: tuple[float, float]
    end_heading: float


def interpret(program: Program) -> StrokePath:
    """Run turtle semantics: start at the origin heading +x, pen always down.

    Lines advance and draw; turns rotate the heading in place; arcs bend the
    trajectory around a circle, advancing the heading by the sweep; concat
    sequences; repeat interprets its body count times consecutively.
    """
    segments: list[Segment] = []

    def go(node: Program, pos: tuple[float, float], heading: float):
        if isinstance(node, Line):
            end = (
                pos[0] + node.length * math.cos(heading),
                pos[1] + node.length * math.sin(heading),
            )
            segments.append(LineSegment(pos, end))
            return end, heading
        if isinstance(node, Turn):
            return pos, heading + math.radians(node.angle_deg)
        if isinstance(node, Arc):
            sweep = math.radians(node.sweep_deg)
            side = 1.0 if sweep >= 0 else -1.0
            center = (
                pos[0] + node.radius * math.cos(heading + side * math.pi / 2),
                pos[1] + node.radius * math.sin(heading + side * math.pi / 2),
            )
            start_angle = math.atan2(pos[1] - center[1], pos[0] - center[0])
            seg = ArcSegment(center, node.radius, start_angle, sweep)
            segments.append(seg)
            return seg.end, heading + sweep
        if isinstance(node, Concat):
            pos, heading = go(node.left, pos, heading)
            return go(node.right, pos, heading)
        if isinstance(node, Repeat):
            for _ in range(node.count):
                pos, heading = go(node.body, pos, heading)
            return pos, heading
        raise TypeError(f"not a program node: {node!r}")

    pos, heading = go(program, (0.0, 0.0), 0.0)
    return StrokePath(tuple(segments), pos, heading)


_ARC_FLATTEN_STEP = 2.0 * math.pi / 64.0


def _flatten_segment(seg: Segment) -> np.ndarray:
    if isinstance(seg, LineSegment):
        return np.array([seg.start, seg.end])
    n = max(2, int(math.ceil(abs(seg.sweep) / _ARC_FLATTEN_STEP)) + 1)
    angles = seg.start_angle + seg.sweep * np.linspace(0.0, 1.0, n)
    return np.column_stack(
        [
            seg.center[0] + seg.radius * np.cos(angles),
            seg.center[1] + seg.radius * np.sin(angles),
        ]
    )


def rasterize_path(path: StrokePath, size: int) -> np.ndarray:
    """Render the path into a size x size [0,1] raster, 10% margin, no AA.

    An empty path (turn-only program) yields an all-zero raster.
    """
    if size < 32:
        raise ValueError(f"raster size must be >= 32, got {size}")
    polylines = [_flatten_segment(seg) for seg in path.segments]
    return rasterize_polylines(polylines, size=size, margin=0.1)


def count_primitives(program: Program) -> tuple[int, int]:
    """Static (motor, control) node counts; repeat bodies are not unrolled."""
    if isinstance(program, (Line, Arc, Turn)):
        return 1, 0
    if isinstance(program, Concat):
        ml, cl = count_primitives(program.left)
        mr, cr = count_primitives(program.right)
        return ml + mr, cl + cr + 1
    if isinstance(program, Repeat):
        m, c = count_primitives(program.body)
        return m, c + 1
    raise TypeError(f"not a program node: {program!r}")


def program_depth(program: Program) -> int:
    if isinstance(program, (Line, Arc, Turn)):
        return 1
    if isinstance(program, Concat):
        return 1 + max(program_depth(program.left), program_depth(program.right))
    return 1 + program_depth(program.body)


def mean_grey(raster: np.ndarray) -> float:
    """Arithmetic mean pixel value."""
    return float(np.mean(np.asarray(raster, dtype=float)))


def style_process(styles=("greek", "celtic"), raster_size: int = 64):
    """Hierarchical process over drawing styles: draw a grammar uniformly,
    then a rendered program sampled from it.

    The parameter value is the style index.  Program-level likelihoods are
    intractable after rendering, so only triplet sampling applies.
    """
    from .core import HierarchicalProcess

    grammars = tuple(builtin_grammar(s) for s in styles)

    def param_sampler(rng: np.random.Generator) -> int:
        return int(rng.integers(0, len(grammars)))

    def datum_sampler(theta: int, rng: np.random.Generator) -> np.ndarray:
        program = sample_program(grammars[int(theta)], rng)
        return rasterize_path(interpret(program), raster_size)

    return HierarchicalProcess(
        param_sampler=param_sampler,
        datum_sampler=datum_sampler,
        label_of=lambda theta: int(theta),
    )


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def to_sexpr(program: Program) -> str:
    """Serialize to s-expression text, e.g. (repeat 4 (concat (line 1) (turn 90)))."""
    if isinstance(program, Line):
        return f"(line {_fmt(program.length)})"
    if isinstance(program, Arc):
        return f"(arc {_fmt(program.radius)} {_fmt(program.sweep_deg)})"
    if isinstance(program, Turn):
        return f"(turn {_fmt(program.angle_deg)})"
    if isinstance(program, Concat):
        return f"(concat {to_sexpr(program.left)} {to_sexpr(program.right)})"
    if isinstance(program, Repeat):
        return f"(repeat {program.count} {to_sexpr(program.body)})"
    raise TypeError(f"not a program node: {program!r}")


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_sexpr(text: str) -> Program:
    """Parse the s-expression program format produced by ``to_sexpr``."""
    tokens = _TOKEN.findall(text)
    pos = 0

    def expect(tok: str):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            raise ValueError(f"expected {tok!r} at token {pos} in {text!r}")
        pos += 1

    def number() -> float:
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of program text")
        val = float(tokens[pos])
        pos += 1
        return val

    def node() -> Program:
        nonlocal pos
        expect("(")
        if pos >= len(tokens):
            raise ValueError("unexpected end of program text")
        head = tokens[pos]
        pos += 1
        if head == "line":
            out: Program = Line(number())
        elif head == "arc":
            out = Arc(number(), number())
        elif head == "turn":
            out = Turn(number())
        elif head == "concat":
            out = Concat(node(), node())
        elif head == "repeat":
            out = Repeat(int(number()), node())
        else:
            raise ValueError(f"unknown program head {head!r}")
        expect(")")
        return out

    result = node()
    if pos != len(tokens):
        raise ValueError(f"trailing tokens in program text: {tokens[pos:]}")
    return result
