"""Synthetic layered reservoir topologies and noisy observation sets."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .model import (
    SIGMA_BHP,
    SIGMA_BLOCK,
    Block,
    Connection,
    ObservationPoint,
    ObservationSet,
    Perforation,
    ReservoirModel,
    ScheduleEntry,
    Well,
)
from .simulator import Simulator

__all__ = [
    "SyntheticSpec",
    "PRESETS",
    "build_synthetic_model",
    "observation_layout",
    "generate_synthetic_observations",
]

# Log-uniform ranges of the generated magnitudes.
PORE_VOLUME = (2e5, 2e6)
AQUIFER_VOLUME = (3e7, 3e8)
T_LAYER = (50.0, 500.0)
T_AQUIFER = (20.0, 200.0)
T_VERTICAL = (5.0, 50.0)
PRODUCTIVITY = (5.0, 50.0)
RATE = (50.0, 400.0)

TOP_DEPTH = 2000.0
LAYER_THICKNESS = 15.0
DATUM_PRESSURE = 200.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_layers: int = 7
    n_wells: int = 40
    n_blocks: int = 124
    n_aquifer: int = 38
    n_connections: int = 139
    n_perforations: int = 75
    n_injectors: int = 10
    compressibility: float = 1e-4
    dt: float = 30.4375
    n_steps: int = 144
    seed: int = 0

    def validate(self):
        nl, nw = self.n_layers, self.n_wells
        n_res = self.n_blocks - self.n_aquifer
        if nl < 1 or nw < 0 or self.n_aquifer < 0:
            raise ValueError("need n_layers >= 1 and non-negative well and aquifer counts")
        if n_res < nl:
            raise ValueError("each layer needs at least one non-aquifer block")
        if self.n_connections < self.n_blocks - 1:
            raise ValueError("connections < blocks - 1: the graph cannot be connected")
        if self.n_connections > self.n_blocks - 1 + len(_extra_candidates(self, set())):
            raise ValueError("too many connections for a layered graph of this size")
        if not nw <= self.n_perforations <= nw * nl:
            raise ValueError("need n_wells <= n_perforations <= n_wells * n_layers")
        if not 0 <= self.n_injectors <= nw:
            raise ValueError("n_injectors must lie in [0, n_wells]")
        if not (self.compressibility > 0 and self.dt > 0 and self.n_steps >= 1):
            raise ValueError("need compressibility > 0, dt > 0, n_steps >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


PRESETS = {
    "field": SyntheticSpec(),
    "desk": SyntheticSpec(n_layers=2, n_wells=2, n_blocks=5, n_aquifer=1, n_connections=5,
                          n_perforations=3, n_injectors=1),
}


def _layer_sizes(total: int, n_layers: int) -> list[int]:
    base, extra = divmod(total, n_layers)
    return [base + (1 if n < extra else 0) for n in range(n_layers)]


def _layout(spec: SyntheticSpec):
    # Non-aquifer blocks first (layer-major), then aquifer blocks.
    res_layers = np.repeat(np.arange(spec.n_layers),
                           _layer_sizes(spec.n_blocks - spec.n_aquifer, spec.n_layers))
    aq_layers = np.repeat(np.arange(spec.n_layers), _layer_sizes(spec.n_aquifer, spec.n_layers))
    return res_layers, aq_layers


def _extra_candidates(spec: SyntheticSpec, used: set) -> list[tuple[int, int]]:
    res_layers, _ = _layout(spec)
    n_res = res_layers.size
    out = []
    for i in range(n_res):
        for j in range(i + 1, n_res):
            if abs(res_layers[i] - res_layers[j]) <= 1 and (i, j) not in used:
                out.append((i, j))
    return out


def _log_uniform(rng, bounds, size=None):
    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    return np.exp(rng.uniform(lo, hi, size))


def build_synthetic_model(spec: SyntheticSpec) -> ReservoirModel:
    """Connected layered reservoir honouring the requested counts.

    The spanning tree links consecutive non-aquifer blocks within each layer,
    attaches every aquifer block to a non-aquifer block of its layer and adds
    one vertical link between each pair of adjacent layers.  Remaining
    connections join random non-aquifer blocks in the same or adjacent layers.
    Each well passes through one non-aquifer block per layer and is perforated
    in at least one of them.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    nl = spec.n_layers
    res_layers, aq_layers = _layout(spec)
    n_res = res_layers.size
    layers = np.concatenate([res_layers, aq_layers])
    members = [np.flatnonzero(res_layers == n) for n in range(nl)]

    depth = TOP_DEPTH + LAYER_THICKNESS * layers + rng.uniform(-3.0, 3.0, layers.size)
    volume = np.concatenate([_log_uniform(rng, PORE_VOLUME, n_res),
                             _log_uniform(rng, AQUIFER_VOLUME, spec.n_aquifer)])
    rho, g = 1000.0, 9.80665
    rho_g = rho * g / 1e5
    p_init = DATUM_PRESSURE + rho_g * (depth - TOP_DEPTH)
    blocks = [Block(int(layers[k]), float(volume[k]), spec.compressibility, float(depth[k]),
                    k >= n_res, float(p_init[k])) for k in range(layers.size)]

    edges: dict[tuple[int, int], tuple[float, float]] = {}
    for n in range(nl):
        for a, b in zip(members[n][:-1], members[n][1:]):
            edges[(int(a), int(b))] = T_LAYER
    for k in range(spec.n_aquifer):
        host = int(rng.choice(members[aq_layers[k]]))
        edges[(host, n_res + k)] = T_AQUIFER
    for n in range(nl - 1):
        a, b = int(rng.choice(members[n])), int(rng.choice(members[n + 1]))
        edges[(a, b)] = T_VERTICAL
    pool = _extra_candidates(spec, set(edges))
    n_extra = spec.n_connections - len(edges)
    for idx in rng.permutation(len(pool))[:n_extra]:
        a, b = pool[idx]
        edges[(a, b)] = T_LAYER if res_layers[a] == res_layers[b] else T_VERTICAL
    keys = sorted(edges, key=lambda e: (min(layers[e[0]], layers[e[1]]), e[0], e[1]))
    conns = [Connection(a, b, float(_log_uniform(rng, edges[(a, b)])),
                        float(depth[a] - depth[b])) for a, b in keys]

    wells = [Well(TOP_DEPTH) for _ in range(spec.n_wells)]
    crossing = np.array([[rng.choice(members[n]) for n in range(nl)]
                         for _ in range(spec.n_wells)], dtype=int).reshape(spec.n_wells, nl)
    perf_layers = [[int(rng.integers(nl))] for _ in range(spec.n_wells)]
    free = [(w, n) for w in range(spec.n_wells) for n in range(nl) if n != perf_layers[w][0]]
    for idx in rng.permutation(len(free))[:spec.n_perforations - spec.n_wells]:
        w, n = free[idx]
        perf_layers[w].append(n)
    pairs = sorted((n, w) for w in range(spec.n_wells) for n in perf_layers[w])
    perfs = []
    for n, w in pairs:
        blk = int(crossing[w, n])
        perfs.append(Perforation(w, blk, float(_log_uniform(rng, PRODUCTIVITY)),
                                 float(depth[blk] - TOP_DEPTH)))

    schedule = []
    injectors = set(rng.permutation(spec.n_wells)[:spec.n_injectors].tolist())
    for w in range(spec.n_wells):
        sign = -1.0 if w in injectors else 1.0
        start = int(rng.integers(0, spec.n_steps // 2 + 1))
        rate = sign * float(_log_uniform(rng, RATE))
        schedule.append(ScheduleEntry(w, start, rate))
        if start + 1 < spec.n_steps:
            change = int(rng.integers(start + 1, spec.n_steps))
            schedule.append(ScheduleEntry(w, change, rate * float(rng.uniform(0.5, 1.5))))

    return ReservoirModel(blocks, conns, perfs, wells, schedule, rho=rho, g=g, dt=spec.dt,
                          n_steps=spec.n_steps, meta={"spec": spec.to_dict()})


def observation_layout(model: ReservoirModel, n_bhp: int | None = None,
                       n_block: int | None = None, every: int = 6,
                       sigma_bhp: float = SIGMA_BHP,
                       sigma_block: float = SIGMA_BLOCK) -> list[tuple[str, int, int, float]]:
    """Deterministic ``(kind, id, step, sigma)`` observation points.

    Observation times are the steps ``every, 2 every, ...`` up to the horizon.
    ``n_bhp`` (default ``min(365, available)``) BHP points and ``n_block``
    (default ``min(15, available)``) non-aquifer block points are picked at
    an even stride from the time-major list of candidate pairs.
    """
    if every < 1:
        raise ValueError("every must be >= 1")
    times = list(range(every, model.n_steps + 1, every))
    res_blocks = [k for k, b in enumerate(model.blocks) if not b.is_aquifer]

    def pick(ids, n):
        cand = [(t, i) for t in times for i in ids]
        n = min(n, len(cand))
        return [cand[(k * len(cand)) // n] for k in range(n)] if n else []

    n_bhp = 365 if n_bhp is None else n_bhp
    n_block = 15 if n_block is None else n_block
    if n_bhp < 0 or n_block < 0:
        raise ValueError("observation counts must be non-negative")
    points = [("BHP", w, t, sigma_bhp) for t, w in pick(range(model.n_wells), n_bhp)]
    points += [("block", b, t, sigma_block) for t, b in pick(res_blocks, n_block)]
    return points


def generate_synthetic_observations(model: ReservoirModel, true_params=None,
                                    noise_seed: int = 0, noise: bool = True,
                                    layout=None) -> ObservationSet:
    """Simulate at ``true_params`` and add ``N(0, sigma^2)`` noise per point."""
    if layout is None:
        layout = observation_layout(model)
    params = model.parameters() if true_params is None else np.asarray(true_params, dtype=float)
    sim = Simulator(model)
    clean = ObservationSet([ObservationPoint(kind, i, t, 0.0, s) for kind, i, t, s in layout])
    d = sim.extract(sim.forward(params), clean)
    if noise:
        rng = np.random.default_rng(noise_seed)
        d = d + clean.sigmas * rng.standard_normal(d.size)
    return clean.with_values(d)
