"""Reservoir model and observation containers with their text file formats.

Model file layout (``#`` starts a comment, records are whitespace separated)::

    [constants]
    rho 1000.0            # fluid density, kg/m^3
    g 9.80665             # m/s^2
    dt 30.4375            # days per time step
    n_steps 144
    [blocks]
    # id layer pore_volume compressibility depth is_aquifer initial_pressure
    [connections]
    # a b transmissibility depth_difference       (h_ab = depth_a - depth_b)
    [perforations]
    # well block productivity depth_difference    (h = depth_block - well ref depth)
    [wells]
    # id ref_depth
    [schedule]
    # well start_step rate                        (rate > 0 produces, < 0 injects)

Block, connection, perforation and well ids are the 0-based record positions
and must appear in order.  A schedule record sets the rate of its well from
the interval starting at ``start_step`` until the next record for that well.

Observation file::

    # kind id step value sigma
    BHP 3 6 182.4 20.0
    block 17 12 195.1 3.0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Block",
    "Connection",
    "Perforation",
    "Well",
    "ScheduleEntry",
    "ReservoirModel",
    "ObservationPoint",
    "ObservationSet",
    "SIGMA_BHP",
    "SIGMA_BLOCK",
    "read_model",
    "write_model",
    "format_model",
    "parse_model",
    "read_observations",
    "write_observations",
]

SIGMA_BHP = 20.0
SIGMA_BLOCK = 3.0
BAR = 1e5  # Pa


@dataclass(frozen=True)
class Block:
    layer: int
    pore_volume: float
    compressibility: float
    depth: float
    is_aquifer: bool
    initial_pressure: float


@dataclass(frozen=True)
class Connection:
    a: int
    b: int
    transmissibility: float
    depth_difference: float


@dataclass(frozen=True)
class Perforation:
    well: int
    block: int
    productivity: float
    depth_difference: float


@dataclass(frozen=True)
class Well:
    ref_depth: float


@dataclass(frozen=True)
class ScheduleEntry:
    well: int
    start_step: int
    rate: float


@dataclass
class ReservoirModel:
    blocks: list[Block]
    connections: list[Connection]
    perforations: list[Perforation]
    wells: list[Well]
    schedule: list[ScheduleEntry]
    rho: float = 1000.0
    g: float = 9.80665
    dt: float = 30.4375
    n_steps: int = 144
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nb, nw = len(self.blocks), len(self.wells)
        if nb < 1:
            raise ValueError("model needs at least one block")
        if self.dt <= 0 or self.n_steps < 0:
            raise ValueError("need dt > 0 and n_steps >= 0")
        if not (self.rho > 0 and self.g > 0):
            raise ValueError("rho and g must be positive")
        for k, b in enumerate(self.blocks):
            if not (b.pore_volume > 0 and b.compressibility > 0):
                raise ValueError(f"block {k}: pore volume and compressibility must be positive")
            if not np.isfinite([b.depth, b.initial_pressure]).all():
                raise ValueError(f"block {k}: non-finite depth or initial pressure")
        seen = set()
        for k, c in enumerate(self.connections):
            if not (0 <= c.a < nb and 0 <= c.b < nb) or c.a == c.b:
                raise ValueError(f"connection {k} references invalid blocks ({c.a}, {c.b})")
            if not c.transmissibility > 0:
                raise ValueError(f"connection {k}: transmissibility must be positive")
            key = (min(c.a, c.b), max(c.a, c.b))
            if key in seen:
                raise ValueError(f"connection {k} duplicates blocks {key}")
            seen.add(key)
        perforated = set()
        for k, pf in enumerate(self.perforations):
            if not (0 <= pf.well < nw and 0 <= pf.block < nb):
                raise ValueError(f"perforation {k} references an invalid well or block")
            if not pf.productivity > 0:
                raise ValueError(f"perforation {k}: productivity must be positive")
            if (pf.well, pf.block) in perforated:
                raise ValueError(f"perforation {k} duplicates well {pf.well} / block {pf.block}")
            perforated.add((pf.well, pf.block))
        wells_with_perf = {pf.well for pf in self.perforations}
        for w in range(nw):
            if w not in wells_with_perf:
                raise ValueError(f"well {w} has no perforation")
        for k, s in enumerate(self.schedule):
            if not 0 <= s.well < nw:
                raise ValueError(f"schedule entry {k} references invalid well {s.well}")
            if not 0 <= s.start_step <= self.n_steps:
                raise ValueError(f"schedule entry {k}: start_step outside [0, n_steps]")
            if not np.isfinite(s.rate):
                raise ValueError(f"schedule entry {k}: non-finite rate")

    # sizes and parameter layout

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_connections(self) -> int:
        return len(self.connections)

    @property
    def n_perforations(self) -> int:
        return len(self.perforations)

    @property
    def n_wells(self) -> int:
        return len(self.wells)

    @property
    def n_params(self) -> int:
        return self.n_blocks + self.n_connections + self.n_perforations

    @property
    def n_layers(self) -> int:
        return max(b.layer for b in self.blocks) + 1

    @property
    def rho_g(self) -> float:
        """Hydrostatic gradient in bar/m."""
        return self.rho * self.g / BAR

    def parameters(self) -> np.ndarray:
        """Stored ``(V, T, J)`` values as one vector."""
        return np.concatenate([
            [b.pore_volume for b in self.blocks],
            [c.transmissibility for c in self.connections],
            [p.productivity for p in self.perforations],
        ]).astype(float)

    def split_parameters(self, params) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        nb, nc = self.n_blocks, self.n_connections
        return params[:nb], params[nb:nb + nc], params[nb + nc:]

    def rates(self) -> np.ndarray:
        """``(n_steps, n_wells)`` rates; row ``n`` drives the step from ``n`` to ``n+1``."""
        q = np.zeros((self.n_steps, self.n_wells))
        for s in sorted(self.schedule, key=lambda e: (e.well, e.start_step)):
            q[s.start_step:, s.well] = s.rate
        return q

    def connection_layer(self, k: int) -> int:
        c = self.connections[k]
        return min(self.blocks[c.a].layer, self.blocks[c.b].layer)

    def perforation_layer(self, k: int) -> int:
        return self.blocks[self.perforations[k].block].layer

    def with_parameters(self, params) -> ReservoirModel:
        """Copy of the model storing ``params`` as its ``(V, T, J)`` values."""
        v, t, j = self.split_parameters(params)
        blocks = [Block(b.layer, float(x), b.compressibility, b.depth, b.is_aquifer,
                        b.initial_pressure) for b, x in zip(self.blocks, v)]
        conns = [Connection(c.a, c.b, float(x), c.depth_difference)
                 for c, x in zip(self.connections, t)]
        perfs = [Perforation(p.well, p.block, float(x), p.depth_difference)
                 for p, x in zip(self.perforations, j)]
        return ReservoirModel(blocks, conns, perfs, list(self.wells), list(self.schedule),
                              self.rho, self.g, self.dt, self.n_steps, dict(self.meta))


def _fmt(x) -> str:
    return repr(float(x))


def format_model(model: ReservoirModel) -> str:
    out = ["[constants]",
           f"rho {_fmt(model.rho)}",
           f"g {_fmt(model.g)}",
           f"dt {_fmt(model.dt)}",
           f"n_steps {model.n_steps}",
           "[blocks]",
           "# id layer pore_volume compressibility depth is_aquifer initial_pressure"]
    for k, b in enumerate(model.blocks):
        out.append(f"{k} {b.layer} {_fmt(b.pore_volume)} {_fmt(b.compressibility)} "
                   f"{_fmt(b.depth)} {int(b.is_aquifer)} {_fmt(b.initial_pressure)}")
    out += ["[connections]", "# id a b transmissibility depth_difference"]
    for k, c in enumerate(model.connections):
        out.append(f"{k} {c.a} {c.b} {_fmt(c.transmissibility)} {_fmt(c.depth_difference)}")
    out += ["[perforations]", "# id well block productivity depth_difference"]
    for k, p in enumerate(model.perforations):
        out.append(f"{k} {p.well} {p.block} {_fmt(p.productivity)} {_fmt(p.depth_difference)}")
    out += ["[wells]", "# id ref_depth"]
    for k, w in enumerate(model.wells):
        out.append(f"{k} {_fmt(w.ref_depth)}")
    out += ["[schedule]", "# well start_step rate"]
    for s in model.schedule:
        out.append(f"{s.well} {s.start_step} {_fmt(s.rate)}")
    return "\n".join(out) + "\n"


_COLUMNS = {"blocks": 7, "connections": 5, "perforations": 5, "wells": 2, "schedule": 3}


def parse_model(text: str) -> ReservoirModel:
    sections: dict[str, list[list[str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in _COLUMNS and current != "constants":
                raise ValueError(f"line {lineno}: unknown section [{current}]")
            if current in sections:
                raise ValueError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ValueError(f"line {lineno}: record outside any section")
        fields = line.split()
        want = 2 if current == "constants" else _COLUMNS[current]
        if len(fields) != want:
            raise ValueError(f"line {lineno}: [{current}] records have {want} fields")
        sections[current].append(fields)

    for name in ("constants", *_COLUMNS):
        if name not in sections:
            raise ValueError(f"missing section [{name}]")

    def ids_in_order(name):
        rows = sections[name]
        for k, r in enumerate(rows):
            if int(r[0]) != k:
                raise ValueError(f"[{name}] ids must be 0, 1, 2, ... in order")
        return rows

    consts = {}
    for key, value in sections["constants"]:
        if key not in ("rho", "g", "dt", "n_steps"):
            raise ValueError(f"unknown constant {key!r}")
        consts[key] = int(value) if key == "n_steps" else float(value)
    blocks = [Block(int(r[1]), float(r[2]), float(r[3]), float(r[4]), bool(int(r[5])),
                    float(r[6])) for r in ids_in_order("blocks")]
    conns = [Connection(int(r[1]), int(r[2]), float(r[3]), float(r[4]))
             for r in ids_in_order("connections")]
    perfs = [Perforation(int(r[1]), int(r[2]), float(r[3]), float(r[4]))
             for r in ids_in_order("perforations")]
    wells = [Well(float(r[1])) for r in ids_in_order("wells")]
    sched = [ScheduleEntry(int(r[0]), int(r[1]), float(r[2])) for r in sections["schedule"]]
    model = ReservoirModel(blocks, conns, perfs, wells, sched, **consts)
    _check_depth_differences(model)
    return model


def _check_depth_differences(model: ReservoirModel, tol: float = 1e-6):
    # Stored h values must agree with the block and well depths they connect.
    for k, c in enumerate(model.connections):
        h = model.blocks[c.a].depth - model.blocks[c.b].depth
        if abs(h - c.depth_difference) > tol * max(1.0, abs(h)):
            raise ValueError(f"connection {k}: depth_difference inconsistent with block depths")
    for k, p in enumerate(model.perforations):
        h = model.blocks[p.block].depth - model.wells[p.well].ref_depth
        if abs(h - p.depth_difference) > tol * max(1.0, abs(h)):
            raise ValueError(f"perforation {k}: depth_difference inconsistent with depths")


def read_model(path) -> ReservoirModel:
    return parse_model(Path(path).read_text())


def write_model(model: ReservoirModel, path) -> None:
    Path(path).write_text(format_model(model))


@dataclass(frozen=True)
class ObservationPoint:
    kind: str  # "BHP" or "block"
    id: int
    step: int
    value: float
    sigma: float

    def __post_init__(self):
        if self.kind not in ("BHP", "block"):
            raise ValueError(f"observation kind must be 'BHP' or 'block', got {self.kind!r}")
        if not self.sigma > 0:
            raise ValueError("observation sigma must be positive")
        if self.step < 0:
            raise ValueError("observation step must be >= 0")


@dataclass
class ObservationSet:
    points: list[ObservationPoint]

    def __len__(self) -> int:
        return len(self.points)

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points], dtype=float)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([p.sigma for p in self.points], dtype=float)

    def with_values(self, values) -> ObservationSet:
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.points),):
            raise ValueError("value vector length does not match the observation count")
        return ObservationSet([ObservationPoint(p.kind, p.id, p.step, float(v), p.sigma)
                               for p, v in zip(self.points, values)])

    def validate(self, model: ReservoirModel) -> None:
        for k, p in enumerate(self.points):
            if p.step > model.n_steps:
                raise ValueError(f"observation {k}: step {p.step} beyond the horizon")
            if p.kind == "BHP":
                if not 0 <= p.id < model.n_wells:
                    raise ValueError(f"observation {k}: no well {p.id}")
                if p.step == 0:
                    raise ValueError(f"observation {k}: BHP is undefined at step 0")
            elif not 0 <= p.id < model.n_blocks:
                raise ValueError(f"observation {k}: no block {p.id}")


def format_observations(obs: ObservationSet) -> str:
    lines = ["# kind id step value sigma"]
    lines += [f"{p.kind} {p.id} {p.step} {_fmt(p.value)} {_fmt(p.sigma)}" for p in obs.points]
    return "\n".join(lines) + "\n"


def parse_observations(text: str) -> ObservationSet:
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        f = line.split()
        if len(f) != 5:
            raise ValueError(f"line {lineno}: expected 'kind id step value sigma'")
        points.append(ObservationPoint(f[0], int(f[1]), int(f[2]), float(f[3]), float(f[4])))
    return ObservationSet(points)


def read_observations(path) -> ObservationSet:
    return parse_observations(Path(path).read_text())


def write_observations(obs: ObservationSet, path) -> None:
    Path(path).write_text(format_observations(obs))
