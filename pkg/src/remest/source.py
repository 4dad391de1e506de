"""Gauss-Markov source simulation and the counter-based noise streams.

Every random quantity of an episode comes from its own labelled Philox stream.
Episode ``s`` of label ``L`` occupies a fixed block of counters, so the noise
of an episode depends only on ``(seed, s)`` and never on batch boundaries,
the policy, or the channel rates. That is what makes common random numbers
work across alpha and (lambda, rho) sweeps.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtri

from .model import Problem, RngConfig

LABELS = {"x0": 0, "w": 1, "v": 2, "gamma": 3, "theta": 4, "sched": 5}

_HALF_ULP = 2.0**-54


@lru_cache(maxsize=64)
def _stream_key(seed: int, label: int) -> tuple[int, int]:
    key = np.random.SeedSequence([int(seed) & (2**64 - 1), label]).generate_state(2, np.uint64)
    return int(key[0]), int(key[1])


def uniforms(seed: int, label: str, start: int, count: int, width: int) -> np.ndarray:
    """Uniform(0,1) draws of shape (count, width) for episodes start..start+count-1.

    ``random()`` consumes one 64-bit word per double and Philox emits four
    words per counter step, so padding the per-episode block to a multiple of
    four lets each episode start at a fixed counter offset.
    """
    block = -(-width // 4) * 4
    bitgen = np.random.Philox(key=np.array(_stream_key(seed, LABELS[label]), dtype=np.uint64))
    if start:
        bitgen.advance(start * block // 4)
    u = np.random.Generator(bitgen).random(count * block).reshape(count, block)
    return u[:, :width]


def normals(seed: int, label: str, start: int, count: int, width: int) -> np.ndarray:
    # Inverse-CDF keeps the one-word-per-draw accounting that ``uniforms`` relies on.
    return ndtri(uniforms(seed, label, start, count, width) + _HALF_ULP)


@dataclass(frozen=True, eq=False)
class EpisodeNoise:
    """Standardized draws for a batch of episodes.

    ``z_*`` are standard normals, ``u_*`` are Uniform(0,1). Channel bits are
    obtained later as ``gamma = u_gamma >= lam`` so the same draws serve every
    channel setting.
    """

    seed: int
    start: int
    z_x0: np.ndarray  # (E, n)
    z_w: np.ndarray  # (E, N+1, n)
    z_v: np.ndarray  # (E, N+1, m)
    u_gamma: np.ndarray  # (E, N+1)
    u_theta: np.ndarray  # (E, N+1)
    u_sched: np.ndarray  # (E, N+1)

    @property
    def episodes(self) -> int:
        return self.z_x0.shape[0]

    def episode(self, i: int) -> "EpisodeNoise":
        sl = slice(i, i + 1)
        return EpisodeNoise(
            self.seed, self.start + i, self.z_x0[sl], self.z_w[sl], self.z_v[sl],
            self.u_gamma[sl], self.u_theta[sl], self.u_sched[sl],
        )


def draw_noise(problem: Problem, seed: int, episodes: int, start: int = 0) -> EpisodeNoise:
    N, n, m = problem.N, problem.n, problem.m
    E = int(episodes)
    steps = N + 1
    return EpisodeNoise(
        seed=int(seed),
        start=int(start),
        z_x0=normals(seed, "x0", start, E, n),
        z_w=normals(seed, "w", start, E, steps * n).reshape(E, steps, n),
        z_v=normals(seed, "v", start, E, steps * m).reshape(E, steps, m),
        u_gamma=uniforms(seed, "gamma", start, E, steps),
        u_theta=uniforms(seed, "theta", start, E, steps),
        u_sched=uniforms(seed, "sched", start, E, steps),
    )


def sym_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix (batched over leading axes)."""
    vals, vecs = np.linalg.eigh(S)
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root[..., None, :]) @ np.swapaxes(vecs, -1, -2)


@dataclass(frozen=True, eq=False)
class NoiseFactors:
    sqrt_M0: np.ndarray
    sqrt_W: np.ndarray
    sqrt_V: np.ndarray


_factor_cache: dict[str, NoiseFactors] = {}


def noise_factors(problem: Problem) -> NoiseFactors:
    src = problem.source
    key = problem.hash
    if key not in _factor_cache:
        _factor_cache[key] = NoiseFactors(sym_sqrt(src.M0), sym_sqrt(src.W), sym_sqrt(src.V))
    return _factor_cache[key]


@dataclass(frozen=True, eq=False)
class SourceTrajectory:
    x: np.ndarray  # (N+1, n) or (E, N+1, n)
    y: np.ndarray  # (N+1, m) or (E, N+1, m)


def trajectories(problem: Problem, noise: EpisodeNoise) -> SourceTrajectory:
    """States and outputs for every episode in ``noise``; arrays are (E, N+1, .)."""
    src = problem.source
    f = noise_factors(problem)
    N = problem.N
    w = np.einsum("kij,ekj->eki", f.sqrt_W, noise.z_w)
    v = np.einsum("kij,ekj->eki", f.sqrt_V, noise.z_v)
    E = noise.episodes
    x = np.empty((E, N + 1, problem.n))
    x[:, 0] = src.m0 + noise.z_x0 @ f.sqrt_M0.T
    for k in range(N):
        x[:, k + 1] = x[:, k] @ src.A[k].T + w[:, k]
    y = np.einsum("kij,ekj->eki", src.C, x) + v
    return SourceTrajectory(x, y)


def sample_trajectory(problem: Problem, rng: RngConfig) -> SourceTrajectory:
    """One episode of the source: x0 ~ N(m0, M0), x[k+1] = A x[k] + w, y = C x + v."""
    noise = draw_noise(problem, rng.seed, 1, start=rng.stream)
    traj = trajectories(problem, noise)
    return SourceTrajectory(traj.x[0], traj.y[0])


def write_trajectory_csv(traj: SourceTrajectory, path) -> None:
    x, y = np.atleast_2d(traj.x), np.atleast_2d(traj.y)
    header = ["k"] + [f"x_{i}" for i in range(x.shape[1])] + [f"y_{j}" for j in range(y.shape[1])]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for k in range(x.shape[0]):
            out.writerow([k, *(repr(float(v)) for v in x[k]), *(repr(float(v)) for v in y[k])])
