"""Exact simulation of the N-object processes and Monte-Carlo estimators built on it."""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .measures import PointCloudMeasure, TestFunctionSet, w1
from .model import CtModel, Domain, DtModel, GridPoint, ModelError, embed

__all__ = [
    "RngSpec",
    "SimResult",
    "MarginalEstimate",
    "StationaryEstimate",
    "round_to_grid",
    "simulate_ct",
    "simulate_dt",
    "simulate",
    "sample_marginals",
    "marginal_moments",
    "stationary_sample",
]

MASK64 = (1 << 64) - 1
CHUNK = 1 << 16  # SSA events per block of random numbers


def splitmix64(x: int) -> int:
    """SplitMix64 finaliser: a bijective 64-bit avalanche mix."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _key(k) -> int:
    if isinstance(k, str):
        return int.from_bytes(hashlib.sha256(k.encode()).digest()[:8], "little")
    return int(k) & MASK64


@dataclass(frozen=True)
class RngSpec:
    """Seed plus the rule for independent per-replica streams.

    Stream ``r`` is seeded with ``splitmix64(seed ^ splitmix64(r))`` and drives a
    PCG64 generator. :meth:`derive` chains the same mix over extra keys, which
    may be integers or strings.
    """

    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & MASK64)

    def stream_seed(self, replica_id: int) -> int:
        return splitmix64(self.seed ^ splitmix64(_key(replica_id)))

    def generator(self, replica_id: int = 0) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.stream_seed(replica_id)))

    def derive(self, *keys) -> "RngSpec":
        s = self.seed
        for k in keys:
            s = splitmix64(s ^ splitmix64(_key(k)))
        return RngSpec(s)


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSpec):
        return rng.generator(0)
    return RngSpec(0 if rng is None else int(rng)).generator(0)


def _as_spec(rng) -> RngSpec:
    if isinstance(rng, RngSpec):
        return rng
    return RngSpec(0 if rng is None else int(rng))


def round_to_grid(domain: Domain, N: int, y) -> GridPoint:
    """Nearest point of the ``1/N`` lattice.

    Boxes round each coordinate to the nearest lattice value (ties toward
    ``lo``). On the simplex, ``N*y`` is rounded by largest remainder, ties going
    to the lowest index, so the counts sum to ``N``.
    """
    if N < 1:
        raise ValueError("N must be positive")
    y = np.asarray(y, dtype=float)
    if domain.kind == "box":
        x = (y - domain.lo_array) * N
        k = np.floor(x)
        k = np.where(x - k > 0.5, k + 1, k)
        k = np.clip(k, 0, domain.grid_extent(N))
        return GridPoint(domain, N, tuple(int(v) for v in k))
    x = np.clip(y, 0.0, None) * N
    base = np.floor(x).astype(np.int64)
    deficit = N - int(base.sum())
    rem = x - base
    order = sorted(range(domain.dim), key=lambda i: (-rem[i], i))
    if deficit >= 0:
        for i in order[:deficit]:
            base[i] += 1
    else:
        for i in reversed(order):
            if deficit == 0:
                break
            if base[i] > 0:
                base[i] -= 1
                deficit += 1
    return GridPoint(domain, N, tuple(int(v) for v in base))


@dataclass
class SimResult:
    """Outcome of one simulated path.

    ``samples`` holds the states (real embedding) at ``sample_times`` when those
    were requested. For discrete-time models ``events`` counts steps.
    """

    final: GridPoint
    events: int
    truncations: int
    samples: np.ndarray | None = None
    sample_times: np.ndarray | None = None
    frozen: bool = False


def _start(model, N, y0) -> GridPoint:
    if isinstance(y0, GridPoint):
        if y0.N != N or y0.domain != model.domain:
            raise ValueError("initial GridPoint does not match model domain / N")
        if not y0.is_valid():
            raise ValueError(f"invalid grid point {y0.coords}")
        return y0
    return round_to_grid(model.domain, N, y0)


def simulate_ct(model: CtModel, N: int, y0, horizon: float, rng=None,
                sample_times: Sequence[float] | None = None) -> SimResult:
    """Exact SSA for the density-dependent jump process with ``N`` objects.

    Jumps that would leave the domain are censored (rate set to zero) and
    counted in ``truncations``. ``rng`` is a numpy Generator, an :class:`RngSpec`
    or an integer seed.
    """
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    start = _start(model, N, y0)
    gen = _as_generator(rng)
    dom = model.domain
    k = np.array(start.coords, dtype=np.int64)
    prog = model.program
    L = model.jump_matrix
    kind = K.BOX if dom.kind == "box" else K.SIMPLEX
    lo = dom.lo_array
    kmax = dom.grid_extent(N)
    if sample_times is not None:
        st = np.asarray(sample_times, dtype=float)
        order = np.argsort(st, kind="stable")
        st_sorted = st[order]
        samples_k = np.zeros((st.shape[0], dom.dim), dtype=np.int64)
    else:
        st_sorted = np.empty(0)
        order = np.empty(0, dtype=np.int64)
        samples_k = np.zeros((0, dom.dim), dtype=np.int64)
    counters = np.zeros(4, dtype=np.int64)
    t = 0.0
    frozen = False
    while True:
        counters[2] = 0
        uniforms = gen.random(2 * CHUNK)
        status, t = K.ssa_run(
            k, float(N), t, float(horizon), prog.ops, prog.args, prog.starts, prog.depth,
            L, kind, lo, kmax, uniforms, st_sorted, order.astype(np.int64), samples_k, counters,
        )
        if status == K.DONE:
            break
    if counters[0] == 0 and horizon > 0:
        frozen = not np.any(model.rates(start.y) > 0)
    final = GridPoint(dom, N, tuple(int(v) for v in k))
    samples = embed(dom, N, samples_k) if sample_times is not None else None
    return SimResult(final, int(counters[0]), int(counters[1]), samples,
                     None if sample_times is None else np.asarray(sample_times, dtype=float), frozen)


def _multinomial_step(model: DtModel, counts: np.ndarray, N: int, gen: np.random.Generator) -> np.ndarray:
    Kmat = model.kernel_at(counts / N)
    dev = np.abs(Kmat.sum(axis=1) - 1.0)
    if np.any(dev > 1e-9) or np.any(Kmat < -1e-12):
        raise ModelError(f"kernel of {model.name!r} is not a stochastic matrix at m={(counts / N).tolist()}")
    Kmat = np.clip(Kmat, 0.0, None)
    Kmat /= Kmat.sum(axis=1, keepdims=True)
    out = np.zeros_like(counts)
    for i, c in enumerate(counts):
        if c > 0:
            out += gen.multinomial(c, Kmat[i])
    return out


def simulate_dt(model: DtModel, N: int, m0, steps: int, rng=None,
                sample_steps: Sequence[int] | None = None) -> SimResult:
    """Synchronous multinomial updates of the occupancy chain for ``steps`` steps."""
    if steps < 0 or int(steps) != steps:
        raise ValueError("steps must be a nonnegative integer")
    start = _start(model, N, m0)
    gen = _as_generator(rng)
    counts = np.array(start.coords, dtype=np.int64)
    want = {}
    if sample_steps is not None:
        for idx, s in enumerate(sample_steps):
            want.setdefault(int(s), []).append(idx)
        samples_k = np.zeros((len(sample_steps), model.domain.dim), dtype=np.int64)
    for step in range(int(steps) + 1):
        for idx in want.get(step, ()):
            samples_k[idx] = counts
        if step == steps:
            break
        counts = _multinomial_step(model, counts, N, gen)
    final = GridPoint(model.domain, N, tuple(int(v) for v in counts))
    samples = embed(model.domain, N, samples_k) if sample_steps is not None else None
    return SimResult(final, int(steps), 0, samples,
                     None if sample_steps is None else np.asarray(sample_steps, dtype=float))


def simulate(model, N, y0, horizon, rng=None, sample_times=None) -> SimResult:
    """Dispatch to :func:`simulate_ct` or :func:`simulate_dt`."""
    if isinstance(model, DtModel):
        steps = int(round(horizon))
        st = None if sample_times is None else [int(round(s)) for s in sample_times]
        return simulate_dt(model, N, y0, steps, rng, st)
    return simulate_ct(model, N, y0, horizon, rng, sample_times)


def _pmap(fn: Callable, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def sample_marginals(model, N: int, y0, times: Sequence[float], replicas: int, rng=None,
                     threads: int = 1) -> np.ndarray:
    """States of ``replicas`` independent paths from ``round_to_grid(y0)`` at ``times``.

    Returns an array of shape ``(replicas, len(times), d)``, indexed by replica id.
    """
    spec = _as_spec(rng)
    start = round_to_grid(model.domain, N, y0) if not isinstance(y0, GridPoint) else y0
    times = list(times)
    horizon = max(times)

    def one(r):
        return simulate(model, N, start, horizon, spec.generator(r), times).samples

    return np.stack(_pmap(one, range(replicas), threads))


@dataclass
class MarginalEstimate:
    names: list
    mean: np.ndarray
    variance: np.ndarray
    replicas: int
    values: np.ndarray = field(repr=False)

    @property
    def ci_halfwidth(self) -> np.ndarray:
        return 1.96 * np.sqrt(self.variance / self.replicas)

    def as_dict(self) -> dict:
        return {
            n: {"mean": float(m), "variance": float(v), "replicas": self.replicas, "ci_halfwidth": float(c)}
            for n, m, v, c in zip(self.names, self.mean, self.variance, self.ci_halfwidth)
        }


def _h_values(h_set, Y) -> tuple[list, np.ndarray]:
    if isinstance(h_set, TestFunctionSet):
        return h_set.names, h_set.evaluate(Y)
    if isinstance(h_set, Mapping):
        names = list(h_set)
        return names, np.column_stack([np.asarray(h_set[n](Y), dtype=float) for n in names])
    raise TypeError("h_set must be a TestFunctionSet or a mapping name -> function")


def estimate_from_values(names, values: np.ndarray) -> MarginalEstimate:
    R = values.shape[0]
    return MarginalEstimate(list(names), values.mean(axis=0), values.var(axis=0, ddof=1), R, values)


def marginal_moments(model, N: int, y0, t: float, h_set, replicas: int, rng=None,
                     threads: int = 1) -> MarginalEstimate:
    """Monte-Carlo estimate of ``E[h(Y^N(t)) | Y^N(0) = round_to_grid(y0)]`` for each ``h``."""
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    states = sample_marginals(model, N, y0, [t], replicas, rng, threads)[:, 0, :]
    names, vals = _h_values(h_set, states)
    return estimate_from_values(names, vals)


@dataclass
class StationaryEstimate:
    cloud: PointCloudMeasure
    N: int
    split_half_w1: float
    flagged: bool
    truncations: int
    events: int
    total_time: float
    start: GridPoint

    def diagnostics(self) -> dict:
        return {
            "split_half_w1": self.split_half_w1,
            "flagged": self.flagged,
            "truncations": self.truncations,
            "events": self.events,
            "total_time": self.total_time,
        }


def stationary_sample(model, N: int, burn_in: float = 200, n_samples: int = 1000, spacing: float = 1,
                      rng=None, flag_threshold: float = 0.05) -> StationaryEstimate:
    """Equal-weight cloud of one long run sampled every ``spacing`` after ``burn_in``.

    The run starts at the domain centroid rounded to the grid. The split-half
    W1 distance (first vs second half of the samples) is a drift diagnostic;
    exceeding ``flag_threshold`` flags the estimate.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    dom = model.domain
    start = round_to_grid(dom, N, dom.centroid)
    if isinstance(model, DtModel):
        if int(burn_in) != burn_in or int(spacing) != spacing:
            raise ValueError("discrete-time burn_in and spacing are step counts")
        times = [int(burn_in) + j * int(spacing) for j in range(n_samples)]
    else:
        times = [burn_in + j * spacing for j in range(n_samples)]
    res = simulate(model, N, start, times[-1], _as_generator(rng), times)
    cloud = PointCloudMeasure.uniform(res.samples)
    half = n_samples // 2
    split = w1(PointCloudMeasure.uniform(res.samples[:half]), PointCloudMeasure.uniform(res.samples[half:]))
    return StationaryEstimate(cloud, N, split, bool(split > flag_threshold), res.truncations, res.events,
                              float(times[-1]), start)
