"""Problem instances: the six task distributions and TSPLIB/CVRPLIB ingestion.

Every sampler takes an explicit ``numpy.random.Generator`` so that instance
generation is a pure function of (spec, stream state).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

DISTRIBUTIONS = ("U", "GM", "E", "C", "G", "R")
PROBLEM_KINDS = ("TSP", "CVRP")
MAX_DEMAND = 10

# paper roles: {20: 30, 50: 40, 100: 50}; desk profile keeps the monotone map
PAPER_CAPACITY = {20: 30, 50: 40, 100: 50}
DESK_CAPACITY = {10: 30, 20: 40, 30: 50}


class ConfigurationError(ValueError):
    """Invalid task or experiment configuration."""


class UnsupportedFormatError(ValueError):
    """Benchmark file uses a feature the parsers do not handle."""


class ParseError(ValueError):
    """Benchmark file is malformed."""


def default_capacity(scale: int) -> int:
    if scale in DESK_CAPACITY:
        return DESK_CAPACITY[scale]
    if scale in PAPER_CAPACITY:
        return PAPER_CAPACITY[scale]
    # interpolate the same monotone rule for other scales
    return 30 if scale <= 20 else (40 if scale <= 50 else 50)


@dataclass(frozen=True)
class TaskSpec:
    distribution: str
    kind: str
    scale: int
    capacity: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigurationError(f"unknown distribution_id {self.distribution!r}")
        if self.kind not in PROBLEM_KINDS:
            raise ConfigurationError(f"unknown problem kind {self.kind!r}")
        if self.scale < 2:
            raise ConfigurationError(f"scale must be >= 2, got {self.scale}")
        if self.kind == "CVRP":
            if self.capacity is None:
                object.__setattr__(self, "capacity", default_capacity(self.scale))
            if self.capacity < MAX_DEMAND:
                raise ConfigurationError(f"capacity {self.capacity} below max demand {MAX_DEMAND}")
        elif self.capacity is not None:
            raise ConfigurationError("capacity is only meaningful for CVRP")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")

    @property
    def name(self) -> str:
        return f"{self.distribution}{self.scale}"

    def with_seed(self, seed: int) -> "TaskSpec":
        return TaskSpec(self.distribution, self.kind, self.scale, self.capacity, seed)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """A TSP or CVRP instance with coordinates in the unit square.

    For CVRP, ``coords`` holds customers only and ``depot`` is separate.
    ``raw_coords``/``raw_depot`` keep benchmark coordinates before
    normalization so lengths can be reported in TSPLIB convention.
    """

    kind: str
    coords: np.ndarray
    depot: np.ndarray | None = None
    demands: np.ndarray | None = None
    capacity: int | None = None
    source: str = "generated"
    name: str = ""
    raw_coords: np.ndarray | None = field(default=None, repr=False)
    raw_depot: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.coords)

    @property
    def n_actions(self) -> int:
        return self.n + 1 if self.kind == "CVRP" else self.n

    def node_coords(self, raw: bool = False) -> np.ndarray:
        """Coordinates in action-index order (CVRP: depot first)."""
        coords = self.raw_coords if raw and self.raw_coords is not None else self.coords
        if self.kind == "CVRP":
            depot = self.raw_depot if raw and self.raw_depot is not None else self.depot
            return np.vstack([depot[None, :], coords])
        return coords

    def features(self) -> np.ndarray:
        """Per-node policy input, shape (n_actions, 3): x, y, demand/capacity."""
        xy = self.node_coords()
        feats = np.zeros((len(xy), 3))
        feats[:, :2] = xy
        if self.kind == "CVRP":
            feats[1:, 2] = self.demands / self.capacity
        return feats

    def to_dict(self) -> dict:
        record = {"kind": self.kind, "name": self.name, "coords": self.coords.tolist(), "source": self.source}
        if self.kind == "CVRP":
            record.update(depot=self.depot.tolist(), demands=self.demands.tolist(), capacity=int(self.capacity))
        if self.raw_coords is not None:
            record["raw_coords"] = self.raw_coords.tolist()
            if self.raw_depot is not None:
                record["raw_depot"] = self.raw_depot.tolist()
        return record

    @classmethod
    def from_dict(cls, record: dict) -> "ProblemInstance":
        kind = record["kind"]
        as_arr = lambda key, dtype=float: None if record.get(key) is None else np.asarray(record[key], dtype=dtype)
        return cls(
            kind=kind,
            coords=as_arr("coords"),
            depot=as_arr("depot"),
            demands=as_arr("demands", np.int64),
            capacity=record.get("capacity"),
            source=record.get("source", "generated"),
            name=record.get("name", ""),
            raw_coords=as_arr("raw_coords"),
            raw_depot=as_arr("raw_depot"),
        )

    def same_as(self, other: "ProblemInstance") -> bool:
        def eq(a, b):
            if a is None or b is None:
                return a is None and b is None
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.kind == other.kind
            and self.capacity == other.capacity
            and eq(self.coords, other.coords)
            and eq(self.depot, other.depot)
            and eq(self.demands, other.demands)
        )


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def _no_zero_demand(demands: np.ndarray) -> np.ndarray:
    # zero-demand customers are re-rounded to 1
    return np.maximum(demands, 1)


def _map_to_demand_range(values: np.ndarray) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi - lo <= 0:
        return np.ones(len(values), dtype=np.int64)
    scaled = 1.0 + 9.0 * (values - lo) / (hi - lo)
    return np.clip(_round_half_up(scaled), 1, MAX_DEMAND)


def _minmax(coords: np.ndarray) -> np.ndarray:
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    span[span == 0] = 1.0
    return (coords - lo) / span


def sample_uniform(n: int, rng: np.random.Generator, depot=None):
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    demands = rng.integers(1, MAX_DEMAND + 1, size=n)
    return coords, demands


def gm_layout(n: int, n_centers: int = 5) -> tuple[int, int]:
    """(centers used as nodes, satellites per center) realizing ``n`` nodes."""
    centers = min(n_centers, n)
    per_center = math.ceil((n - centers) / centers) if n > centers else 0
    return centers, per_center


def sample_gaussian_mixture(n: int, rng: np.random.Generator, depot=None):
    """Five clusters on [0,50]^2; the centers themselves are nodes."""
    n_centers, per_center = gm_layout(n)
    centers = rng.uniform(0.0, 50.0, size=(n_centers, 2))
    sats = centers[:, None, :] + rng.normal(0.0, 1.0, size=(n_centers, per_center, 2))
    owner = np.repeat(np.arange(n_centers), per_center)
    sats = sats.reshape(-1, 2)
    n_sats = n - n_centers
    sats, owner = sats[:n_sats], owner[:n_sats]

    coords = _minmax(np.vstack([centers, sats]))
    center_demand = rng.integers(1, MAX_DEMAND + 1, size=n_centers)
    if n_sats:
        dist = np.linalg.norm(coords[n_centers:] - coords[owner], axis=1)
        span = dist.max() - dist.min()
        dist_norm = (dist - dist.min()) / span if span > 0 else np.zeros_like(dist)
        sat_demand = _round_half_up(10.0 * dist_norm)
    else:
        sat_demand = np.zeros(0, dtype=np.int64)
    demands = _no_zero_demand(np.concatenate([center_demand, sat_demand]))
    return coords, demands


def explosion_move(coords: np.ndarray, center: np.ndarray, shifts: np.ndarray, angles: np.ndarray, radius: float = 0.3):
    """Push every point closer than ``radius`` to ``center`` out to ``radius + shift``.

    ``angles`` gives the push direction for points sitting exactly on the center.
    """
    out = coords.copy()
    delta = coords - center
    dist = np.linalg.norm(delta, axis=1)
    hit = dist < radius
    unit = np.zeros_like(delta)
    nz = hit & (dist > 0)
    unit[nz] = delta[nz] / dist[nz, None]
    on_center = hit & (dist == 0)
    unit[on_center] = np.stack([np.cos(angles[on_center]), np.sin(angles[on_center])], axis=1)
    out[hit] = center + unit[hit] * (radius + shifts[hit, None])
    return np.clip(out, 0.0, 1.0)


def explosion_shifts(rng: np.random.Generator, size: int) -> np.ndarray:
    # Exp(40) read as rate 40, mean 1/40
    return rng.exponential(1.0 / 40.0, size=size)


def sample_explosion(n: int, rng: np.random.Generator, depot=None):
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    center = rng.uniform(0.0, 1.0, size=2)
    shifts = explosion_shifts(rng, n)
    angles = rng.uniform(0.0, 2 * np.pi, size=n)
    coords = explosion_move(coords, center, shifts, angles)
    raw = np.clip(_round_half_up(rng.normal(5.0, 1.0, size=n)), 0, MAX_DEMAND)
    return coords, _no_zero_demand(raw)


def compression_move(coords: np.ndarray, p1: np.ndarray, p2: np.ndarray, new_dist: np.ndarray, band: float = 0.3):
    """Re-place points within ``band`` of line p1-p2 at signed distance ``new_dist``."""
    direction = p2 - p1
    norm = np.linalg.norm(direction)
    if norm == 0:
        return np.clip(coords.copy(), 0.0, 1.0)
    direction = direction / norm
    normal = np.array([-direction[1], direction[0]])
    rel = coords - p1
    signed = rel @ normal
    hit = np.abs(signed) < band
    out = coords.copy()
    out[hit] = coords[hit] + (new_dist[hit] - signed[hit])[:, None] * normal
    return np.clip(out, 0.0, 1.0)


def compression_offsets(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.normal(0.0, 0.1, size=size)


def sample_compression(n: int, rng: np.random.Generator, depot=None):
    coords = rng.uniform(0.0, 1.0, size=(n, 2))
    p1 = rng.uniform(0.0, 1.0, size=2)
    p2 = rng.uniform(0.0, 1.0, size=2)
    new_dist = compression_offsets(rng, n)
    coords = compression_move(coords, p1, p2, new_dist)
    raw = np.clip(_round_half_up(10.0 - rng.normal(5.0, 1.0, size=n)), 0, MAX_DEMAND)
    return coords, _no_zero_demand(raw)


def grid_shape(n: int, w: float, h: float) -> tuple[int, int]:
    a = math.ceil(math.sqrt(n * w / h))
    b = math.ceil(n / a)
    return a, b


def grid_points(n: int, w: float, h: float, cx: float, cy: float) -> np.ndarray:
    a, b = grid_shape(n, w, h)
    xs = cx - w / 2 + (np.arange(a) + 0.5) * (w / a)
    ys = cy - h / 2 + (np.arange(b) + 0.5) * (h / b)
    gx, gy = np.meshgrid(xs, ys)  # rows ordered by increasing y, columns by increasing x
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    # row-major order leaves the largest-x cells of the top row empty
    return pts[:n]


def sample_grid(n: int, rng: np.random.Generator, depot=None):
    p = rng.uniform(0.2, 0.8)
    w, h = (1.0, p) if rng.uniform() <= 0.5 else (p, 1.0)
    cx = rng.uniform(w / 2, 1 - w / 2)
    cy = rng.uniform(h / 2, 1 - h / 2)
    coords = np.clip(grid_points(n, w, h, cx, cy), 0.0, 1.0)
    ref = depot if depot is not None else np.array([0.5, 0.5])
    noisy = np.linalg.norm(coords - ref, axis=1) + rng.uniform(0.0, 1.0, size=n)
    return coords, _map_to_demand_range(noisy)


def ring_radii(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.uniform(0.3, 0.4, size=size) + rng.normal(0.0, 0.05, size=size)


def sample_ring(n: int, rng: np.random.Generator, depot=None):
    p = rng.uniform(0.2, 0.8)
    angle = rng.uniform(0.0, 2 * np.pi, size=n)
    radius = ring_radii(rng, n)
    coords = 0.5 + radius[:, None] * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    axis = 0 if rng.uniform() <= 0.5 else 1
    coords[:, axis] *= p
    coords = np.clip(coords, 0.0, 1.0)
    ref = depot if depot is not None else np.array([0.5, 0.5])
    noisy = np.linalg.norm(coords - ref, axis=1) + rng.uniform(0.0, 2.0, size=n)
    return coords, _map_to_demand_range(noisy)


SAMPLERS: dict[str, Callable] = {
    "U": sample_uniform,
    "GM": sample_gaussian_mixture,
    "E": sample_explosion,
    "C": sample_compression,
    "G": sample_grid,
    "R": sample_ring,
}


def generate_instance(spec: TaskSpec, rng: np.random.Generator | None = None) -> ProblemInstance:
    """Draw one instance. Without ``rng`` the stream is seeded from ``spec.seed``."""
    if spec.distribution not in SAMPLERS:
        raise ConfigurationError(f"unknown distribution_id {spec.distribution!r}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    # depot is drawn first (independent of customers) so Grid/Ring demands can use it
    depot = rng.uniform(0.0, 1.0, size=2)
    coords, demands = SAMPLERS[spec.distribution](spec.scale, rng, depot)
    source = f"generated:{spec.distribution}:{spec.kind}:{spec.scale}:{spec.seed}"
    if spec.kind == "TSP":
        return ProblemInstance("TSP", coords, source=source, name=spec.name)
    return ProblemInstance(
        "CVRP", coords, depot=depot, demands=np.asarray(demands, dtype=np.int64),
        capacity=spec.capacity, source=source, name=spec.name,
    )


def generate_instances(spec: TaskSpec, count: int, rng: np.random.Generator) -> list[ProblemInstance]:
    return [generate_instance(spec, rng) for _ in range(count)]


def save_instances(instances: list[ProblemInstance], path: str | Path) -> None:
    Path(path).write_text("\n".join(json.dumps(inst.to_dict()) for inst in instances) + "\n")


def load_instances(path: str | Path) -> list[ProblemInstance]:
    lines = Path(path).read_text().splitlines()
    return [ProblemInstance.from_dict(json.loads(line)) for line in lines if line.strip()]


# --------------------------------------------------------------------------
# TSPLIB / CVRPLIB

_KEYWORD = re.compile(r"^\s*([A-Z_]+)\s*:?\s*(.*?)\s*$")
_SECTIONS = ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION", "TOUR_SECTION",
             "EDGE_WEIGHT_SECTION", "DISPLAY_DATA_SECTION", "BACKHAUL_SECTION")


def _split_tsplib(text: str | bytes) -> tuple[dict, dict]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    header: dict[str, str] = {}
    sections: dict[str, list[list[str]]] = {}
    current = None
    for line in text.splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "EOF":
            break
        token = stripped.split()[0].rstrip(":")
        if token in _SECTIONS:
            current = token
            sections[current] = []
            continue
        m = _KEYWORD.match(stripped)
        if current is None or (m and ":" in stripped and not stripped[0].isdigit() and not stripped[0] == "-"):
            if not m:
                raise ParseError(f"cannot parse header line {stripped!r}")
            header[m.group(1)] = m.group(2).lstrip(":").strip()
            current = None
            continue
        sections[current].append(stripped.split())
    return header, sections


def normalize_coords(points: np.ndarray) -> np.ndarray:
    """Shift to the origin and scale by the largest axis span into [0,1]^2.

    A single scale factor keeps normalized lengths proportional to raw ones.
    """
    lo = points.min(axis=0)
    span = float((points.max(axis=0) - lo).max())
    if span == 0:
        span = 1.0
    return (points - lo) / span


def _coord_table(header: dict, sections: dict) -> tuple[list[int], np.ndarray]:
    for key in ("NAME", "DIMENSION"):
        if key not in header:
            raise UnsupportedFormatError(f"missing {key}")
    weight_type = header.get("EDGE_WEIGHT_TYPE")
    if weight_type is None:
        raise UnsupportedFormatError("missing EDGE_WEIGHT_TYPE")
    if weight_type != "EUC_2D":
        raise UnsupportedFormatError(f"EDGE_WEIGHT_TYPE {weight_type} not supported (EUC_2D only)")
    if "NODE_COORD_SECTION" not in sections:
        raise UnsupportedFormatError("missing NODE_COORD_SECTION")
    rows = sections["NODE_COORD_SECTION"]
    dim = int(header["DIMENSION"])
    if len(rows) != dim:
        raise ParseError(f"DIMENSION {dim} but {len(rows)} coordinates")
    try:
        ids = [int(r[0]) for r in rows]
        pts = np.array([[float(r[1]), float(r[2])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"bad NODE_COORD_SECTION row: {exc}") from exc
    return ids, pts


def parse_tsplib(text: str | bytes) -> ProblemInstance:
    header, sections = _split_tsplib(text)
    ptype = header.get("TYPE", "TSP")
    if ptype not in ("TSP",):
        raise UnsupportedFormatError(f"TYPE {ptype} is not TSP")
    _, raw = _coord_table(header, sections)
    name = header["NAME"]
    return ProblemInstance("TSP", normalize_coords(raw), source=f"benchmark:{name}", name=name, raw_coords=raw)


def parse_cvrplib(text: str | bytes) -> ProblemInstance:
    header, sections = _split_tsplib(text)
    ptype = header.get("TYPE", "CVRP")
    if ptype != "CVRP":
        raise UnsupportedFormatError(f"TYPE {ptype} is not CVRP")
    if "CAPACITY" not in header:
        raise UnsupportedFormatError("missing CAPACITY")
    for sec in ("DEMAND_SECTION", "DEPOT_SECTION"):
        if sec not in sections:
            raise UnsupportedFormatError(f"missing {sec}")
    ids, raw = _coord_table(header, sections)
    capacity = int(header["CAPACITY"])
    depots = [int(r[0]) for r in sections["DEPOT_SECTION"] if int(r[0]) != -1]
    if len(depots) != 1:
        raise UnsupportedFormatError(f"DEPOT_SECTION lists {len(depots)} depots; exactly one supported")
    demand_map = {}
    for r in sections["DEMAND_SECTION"]:
        value = float(r[1])
        if value != int(value):
            raise ParseError(f"non-integral demand {r[1]} for node {r[0]}")
        demand_map[int(r[0])] = int(value)
    if set(demand_map) != set(ids):
        raise ParseError("DEMAND_SECTION does not cover every node")
    depot_id = depots[0]
    if demand_map[depot_id] != 0:
        raise ParseError(f"depot {depot_id} has nonzero demand {demand_map[depot_id]}")
    order = [i for i, node in enumerate(ids) if node != depot_id]
    depot_row = ids.index(depot_id)
    normed = normalize_coords(raw)
    name = header["NAME"]
    return ProblemInstance(
        "CVRP",
        normed[order],
        depot=normed[depot_row],
        demands=np.array([demand_map[ids[i]] for i in order], dtype=np.int64),
        capacity=capacity,
        source=f"benchmark:{name}",
        name=name,
        raw_coords=raw[order],
        raw_depot=raw[depot_row],
    )


def parse_tour(text: str | bytes) -> list[int]:
    """Read a TSPLIB tour file into 0-based node indices."""
    _, sections = _split_tsplib(text)
    if "TOUR_SECTION" not in sections:
        raise ParseError("missing TOUR_SECTION")
    tour = []
    for row in sections["TOUR_SECTION"]:
        for tok in row:
            if int(tok) == -1:
                return tour
            tour.append(int(tok) - 1)
    return tour


def _fmt(v: float) -> str:
    return repr(float(v))


def format_tsplib(instance: ProblemInstance) -> str:
    pts = instance.raw_coords if instance.raw_coords is not None else instance.coords
    lines = [f"NAME : {instance.name or 'instance'}", "TYPE : TSP", f"DIMENSION : {len(pts)}",
             "EDGE_WEIGHT_TYPE : EUC_2D", "NODE_COORD_SECTION"]
    lines += [f"{i} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(pts, 1)]
    lines.append("EOF")
    return "\n".join(lines) + "\n"


def format_cvrplib(instance: ProblemInstance) -> str:
    pts = instance.node_coords(raw=True)
    lines = [f"NAME : {instance.name or 'instance'}", "TYPE : CVRP", f"DIMENSION : {len(pts)}",
             "EDGE_WEIGHT_TYPE : EUC_2D", f"CAPACITY : {instance.capacity}", "NODE_COORD_SECTION"]
    lines += [f"{i} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(pts, 1)]
    lines.append("DEMAND_SECTION")
    lines.append("1 0")
    lines += [f"{i} {int(d)}" for i, d in enumerate(instance.demands, 2)]
    lines += ["DEPOT_SECTION", "1", "-1", "EOF"]
    return "\n".join(lines) + "\n"


def read_benchmark(path: str | Path) -> ProblemInstance:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".vrp":
        return parse_cvrplib(text)
    return parse_tsplib(text)


def bundled_dir(kind: str = "tsplib") -> Path:
    return Path(__file__).parent / "data" / kind
