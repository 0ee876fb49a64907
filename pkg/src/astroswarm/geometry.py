"""Astrobot kinematics, hexagonal swarm layouts, and collision geometry.

An astrobot is a two-joint planar arm mounted at a fixed center on the focal
plane. Its ferrule (fiber tip) can reach any point of the annulus with radii
[|l1 - l2|, l1 + l2] around the center. Swarms pack astrobots in a hexagonal
lattice tight enough that arm workspaces overlap, which is what makes the
coordination problem collision-prone in the first place.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_PITCH = 22.4
DEFAULT_ARM = 11.2

_TWO_PI = 2.0 * math.pi


class WorkspaceError(ValueError):
    """Raised when a target lies outside an astrobot's reachable annulus."""


@dataclass(frozen=True)
class AstrobotSpec:
    """Fixed per-astrobot geometry: mount point and the two arm lengths (mm)."""

    id: int
    center: tuple[float, float]
    l1: float
    l2: float

    def __post_init__(self) -> None:
        if self.l1 <= 0.0 or self.l2 <= 0.0:
            raise ValueError(f"astrobot {self.id}: arm lengths must be positive")

    @property
    def reach_min(self) -> float:
        return abs(self.l1 - self.l2)

    @property
    def reach_max(self) -> float:
        return self.l1 + self.l2


@dataclass(frozen=True)
class ArmPose:
    """Joint angles: theta is the absolute first-arm angle, phi the second-arm
    angle relative to the first. The folded pose (theta=0, phi=pi) parks the
    ferrule at distance |l1 - l2| from the center."""

    theta: float
    phi: float


FOLDED_POSE = ArmPose(theta=0.0, phi=math.pi)


@dataclass(frozen=True)
class Neighborhood:
    """An astrobot and its adjacent astrobots: center first, then neighbors in
    ascending id. At most 7 members in a hexagonal packing."""

    center_id: int
    member_ids: tuple[int, ...]


class SwarmLayout:
    """Immutable hexagonal placement of astrobots plus the adjacency graph.

    Astrobot ids are contiguous 0..n-1 and index into ``astrobots``. Two
    astrobots are neighbors iff their center distance is within
    pitch * (1 +/- 1e-6). Instances are safe to share across threads.
    """

    __slots__ = ("pitch", "astrobots", "neighbor_graph", "_positions")

    def __init__(self, pitch: float, astrobots: Sequence[AstrobotSpec]):
        if pitch <= 0.0:
            raise ValueError("pitch must be positive")
        astrobots = tuple(astrobots)
        for idx, spec in enumerate(astrobots):
            if spec.id != idx:
                raise ValueError("astrobot ids must be contiguous 0..n-1 in order")
            if spec.l1 + spec.l2 < pitch * (1.0 - 1e-9):
                raise ValueError(
                    f"astrobot {idx}: arms too short to reach a neighbor centroid "
                    f"(l1+l2={spec.l1 + spec.l2} < pitch={pitch})"
                )
        self.pitch = float(pitch)
        self.astrobots = astrobots
        self._positions = np.array([s.center for s in astrobots], dtype=np.float64).reshape(-1, 2)
        self.neighbor_graph = _adjacency(self._positions, self.pitch)

    @property
    def n(self) -> int:
        return len(self.astrobots)

    def positions(self) -> np.ndarray:
        """(n, 2) array of astrobot centers. Callers must not mutate it."""
        return self._positions

    def neighbors(self, id: int) -> frozenset[int]:
        self._check_id(id)
        return self.neighbor_graph[id]

    def degree(self, id: int) -> int:
        return len(self.neighbors(id))

    def degrees(self) -> np.ndarray:
        return np.array([len(self.neighbor_graph[i]) for i in range(self.n)], dtype=np.int64)

    def _check_id(self, id: int) -> None:
        if not 0 <= id < self.n:
            raise KeyError(f"unknown astrobot id {id}")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SwarmLayout):
            return NotImplemented
        return self.pitch == other.pitch and self.astrobots == other.astrobots

    def __repr__(self) -> str:
        return f"SwarmLayout(n={self.n}, pitch={self.pitch})"


def _adjacency(positions: np.ndarray, pitch: float) -> dict[int, frozenset[int]]:
    n = positions.shape[0]
    graph: dict[int, set[int]] = {i: set() for i in range(n)}
    if n > 1:
        diff = positions[:, None, :] - positions[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        lo, hi = pitch * (1.0 - 1e-6), pitch * (1.0 + 1e-6)
        for i, j in zip(*np.nonzero((dist >= lo) & (dist <= hi))):
            if i < j:
                graph[int(i)].add(int(j))
                graph[int(j)].add(int(i))
    result = {i: frozenset(members) for i, members in graph.items()}
    for i, members in result.items():
        if len(members) > 6:
            raise ValueError(f"astrobot {i} has {len(members)} neighbors; hexagonal packing allows 6")
    return result


def hex_capacity(rings: int) -> int:
    """Number of cells in a centered hexagon with the given ring count."""
    return 1 + 3 * rings * (rings + 1)


def build_hex_swarm(
    rings: int,
    count: int | None = None,
    pitch: float = DEFAULT_PITCH,
    l1: float = DEFAULT_ARM,
    l2: float = DEFAULT_ARM,
) -> SwarmLayout:
    """Build a centered hexagonal layout of ``rings`` rings around one astrobot.

    If ``count`` is given and smaller than the full hexagon, astrobots are
    removed from the outermost ring inward, clockwise starting from angle 0,
    until ``count`` remain. Ids are then reassigned contiguously, preserving
    the (ring, counterclockwise angle) generation order.
    """
    if rings < 0:
        raise ValueError("rings must be >= 0")
    if pitch <= 0.0:
        raise ValueError("pitch must be positive")
    full = hex_capacity(rings)
    if count is None:
        count = full
    if count < 1:
        raise ValueError("count must be >= 1")
    if count > full:
        raise ValueError(f"insufficient rings: {rings} rings hold {full} astrobots, requested {count}")

    cells = _hex_cells(rings, pitch)  # list of (ring, angle, x, y) in id order
    excess = full - count
    kept = _trim_clockwise(cells, excess, rings)
    specs = [
        AstrobotSpec(id=i, center=(x, y), l1=l1, l2=l2)
        for i, (_, _, x, y) in enumerate(kept)
    ]
    return SwarmLayout(pitch=pitch, astrobots=specs)


def _hex_cells(rings: int, pitch: float) -> list[tuple[int, float, float, float]]:
    """Centered-hexagon cell positions ordered by (ring, ccw angle from 0)."""
    cells: list[tuple[int, float, float, float]] = [(0, 0.0, 0.0, 0.0)]
    for ring in range(1, rings + 1):
        members = []
        for q in range(-ring, ring + 1):
            for r in range(-ring, ring + 1):
                if (abs(q) + abs(r) + abs(q + r)) // 2 != ring:
                    continue
                x = pitch * (q + 0.5 * r)
                y = pitch * (math.sqrt(3.0) / 2.0) * r
                angle = math.atan2(y, x) % _TWO_PI
                members.append((angle, q, r, x, y))
        members.sort(key=lambda m: (m[0], m[1], m[2]))
        cells.extend((ring, a, x, y) for a, _, _, x, y in members)
    return cells


def _trim_clockwise(
    cells: list[tuple[int, float, float, float]], excess: int, rings: int
) -> list[tuple[int, float, float, float]]:
    removed: set[int] = set()
    ring = rings
    while excess > 0 and ring >= 1:
        ring_idx = [i for i, c in enumerate(cells) if c[0] == ring and i not in removed]
        # clockwise from angle 0: angle 0 first, then descending ccw angle
        ring_idx.sort(key=lambda i: (-cells[i][1]) % _TWO_PI)
        for i in ring_idx[:excess]:
            removed.add(i)
        excess -= min(excess, len(ring_idx))
        ring -= 1
    return [c for i, c in enumerate(cells) if i not in removed]


def neighborhood_of(layout: SwarmLayout, id: int) -> Neighborhood:
    """The astrobot itself plus its graph neighbors, center first then ascending id."""
    members = (id, *sorted(layout.neighbors(id)))
    return Neighborhood(center_id=id, member_ids=members)


def sample_target(spec: AstrobotSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw a target uniformly by area from the astrobot's reachable annulus."""
    r = math.sqrt(rng.uniform(spec.reach_min**2, spec.reach_max**2))
    angle = rng.uniform(0.0, _TWO_PI)
    return np.array(
        [spec.center[0] + r * math.cos(angle), spec.center[1] + r * math.sin(angle)],
        dtype=np.float64,
    )


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, _TWO_PI)
    if a <= 0.0:
        a += _TWO_PI
    return a - math.pi


def inverse_kinematics(spec: AstrobotSpec, target: Sequence[float]) -> ArmPose:
    """Joint angles placing the ferrule on the target.

    Returns the elbow-positive solution (phi in [0, pi]); the mirrored branch
    is intentionally not exposed. Degenerate targets at the center (equal
    arms) tie-break theta to 0.
    """
    dx = float(target[0]) - spec.center[0]
    dy = float(target[1]) - spec.center[1]
    d = math.hypot(dx, dy)
    tol = 1e-9
    if d < spec.reach_min - tol or d > spec.reach_max + tol:
        raise WorkspaceError(
            f"out of workspace: target at distance {d} outside "
            f"[{spec.reach_min}, {spec.reach_max}] of astrobot {spec.id}"
        )
    cos_phi = (d * d - spec.l1**2 - spec.l2**2) / (2.0 * spec.l1 * spec.l2)
    phi = math.acos(min(1.0, max(-1.0, cos_phi)))
    if d < 1e-12:
        return ArmPose(theta=0.0, phi=phi)
    theta = math.atan2(dy, dx) - math.atan2(
        spec.l2 * math.sin(phi), spec.l1 + spec.l2 * math.cos(phi)
    )
    return ArmPose(theta=wrap_angle(theta), phi=phi)


def arm_chain(spec: AstrobotSpec, pose: ArmPose) -> np.ndarray:
    """Forward kinematics: (3, 2) polyline of center, elbow, ferrule."""
    cx, cy = spec.center
    ex = cx + spec.l1 * math.cos(pose.theta)
    ey = cy + spec.l1 * math.sin(pose.theta)
    fx = ex + spec.l2 * math.cos(pose.theta + pose.phi)
    fy = ey + spec.l2 * math.sin(pose.theta + pose.phi)
    return np.array([[cx, cy], [ex, ey], [fx, fy]], dtype=np.float64)


def _point_seg_sq(px, py, ax, ay, bx, by):
    ux, uy = bx - ax, by - ay
    length_sq = ux * ux + uy * uy
    if length_sq <= 0.0:
        dx, dy = px - ax, py - ay
        return dx * dx + dy * dy
    t = ((px - ax) * ux + (py - ay) * uy) / length_sq
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    dx = px - (ax + t * ux)
    dy = py - (ay + t * uy)
    return dx * dx + dy * dy


def _seg_seg_sq(ax, ay, bx, by, cx, cy, dx, dy):
    """Squared minimum distance between segments AB and CD."""
    rx, ry = bx - ax, by - ay
    sx, sy = dx - cx, dy - cy
    d1 = sx * (ay - cy) - sy * (ax - cx)
    d2 = sx * (by - cy) - sy * (bx - cx)
    d3 = rx * (cy - ay) - ry * (cx - ax)
    d4 = rx * (dy - ay) - ry * (dx - ax)
    if ((d1 > 0.0 and d2 < 0.0) or (d1 < 0.0 and d2 > 0.0)) and (
        (d3 > 0.0 and d4 < 0.0) or (d3 < 0.0 and d4 > 0.0)
    ):
        return 0.0  # proper crossing
    best = _point_seg_sq(ax, ay, cx, cy, dx, dy)
    v = _point_seg_sq(bx, by, cx, cy, dx, dy)
    if v < best:
        best = v
    v = _point_seg_sq(cx, cy, ax, ay, bx, by)
    if v < best:
        best = v
    v = _point_seg_sq(dx, dy, ax, ay, bx, by)
    if v < best:
        best = v
    return best


def _polyline_segments(points: np.ndarray) -> list[tuple[float, float, float, float]]:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 1:
        x, y = pts[0]
        return [(float(x), float(y), float(x), float(y))]
    return [
        (float(pts[i, 0]), float(pts[i, 1]), float(pts[i + 1, 0]), float(pts[i + 1, 1]))
        for i in range(pts.shape[0] - 1)
    ]


def min_chain_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum Euclidean distance between two polylines, over all segment pairs."""
    best = math.inf
    for sa in _polyline_segments(a):
        for sb in _polyline_segments(b):
            v = _seg_seg_sq(*sa, *sb)
            if v < best:
                best = v
                if best == 0.0:
                    return 0.0
    return math.sqrt(best)


# --- layout persistence -----------------------------------------------------

def _layout_record(layout: SwarmLayout) -> dict:
    return {
        "pitch": layout.pitch,
        "astrobots": [
            {"id": s.id, "x": s.center[0], "y": s.center[1], "l1": s.l1, "l2": s.l2}
            for s in layout.astrobots
        ],
        "neighbors": {str(i): sorted(layout.neighbor_graph[i]) for i in range(layout.n)},
    }


def save_layout(layout: SwarmLayout, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_layout_record(layout), fh, indent=1)
        fh.write("\n")


def load_layout(path) -> SwarmLayout:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    try:
        pitch = float(record["pitch"])
        specs = [
            AstrobotSpec(
                id=int(a["id"]),
                center=(float(a["x"]), float(a["y"])),
                l1=float(a["l1"]),
                l2=float(a["l2"]),
            )
            for a in record["astrobots"]
        ]
        stored = {int(i): frozenset(v) for i, v in record["neighbors"].items()}
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed layout file {path}: {exc}") from exc
    layout = SwarmLayout(pitch=pitch, astrobots=specs)
    if layout.neighbor_graph != stored:
        raise ValueError(f"layout file {path}: stored neighbor graph does not match positions")
    return layout


def layout_fingerprint(layout: SwarmLayout) -> str:
    """Content hash of the layout; stable across save/load round-trips."""
    blob = json.dumps(_layout_record(layout), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
