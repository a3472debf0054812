"""Generator assembly and transient integration of dp/dt = A(t) p.

A(t) is the transposed intensity matrix on the truncated space: column m
holds the outflow rates of state m, entry (index(m + e_j), index(m)) the
birth rate and (index(m - e_j), index(m)) the death rate of each type.
Births out of states with m_j = N_j are suppressed (reflecting truncation),
which keeps every column sum exactly zero; the perturbation this introduces
is monitored through the tail-mass diagnostic instead of being hidden.

Integration is classical fixed-step 4th-order Runge-Kutta with the internal
step capped at 0.1 / (2 d (L + M)), the stability scale set by the operator
norm bound of the generator. After every internal step, entries below zero
are clipped and the vector rescaled to unit sum; the pre-clip drift is
checked against 1e-6 so a too-coarse step cannot pass silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, TruncatedSpace

#: Per-column conservation tolerance of assembled generators.
CONSERVATION_TOL = 1e-12

#: Maximum allowed |sum(p) - 1| before renormalization at an internal step.
DRIFT_TOL = 1e-6

#: Internal step cap is STEP_SAFETY / (2 d (L + M)).
STEP_SAFETY = 0.1


class IntegrationError(RuntimeError):
    """Fixed-step integration failed (underflow or drift)."""


class TruncationError(IntegrationError):
    """Tail mass exceeded the configured threshold: truncation too small."""


@dataclass
class GeneratorMatrix:
    """Sparse transposed intensity matrix assembled at one time point."""

    dimension: int
    entries: dict[tuple[int, int], float]
    timestamp: float

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.dimension, self.dimension))
        for (r, c), v in self.entries.items():
            a[r, c] = v
        return a

    def column_sums(self) -> np.ndarray:
        s = np.zeros(self.dimension)
        for (_, c), v in self.entries.items():
            s[c] += v
        return s


@dataclass
class ProbabilityVector:
    """Dense distribution over the enumerated truncated space."""

    values: np.ndarray
    time: float = 0.0

    def validate(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("probability vector must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("probability vector has non-finite entries")
        if v.min(initial=0.0) < -1e-12:
            raise ValueError(
                f"probability vector has entry {v.min():.3e} below -1e-12")
        if abs(v.sum() - 1.0) > 1e-8:
            raise ValueError(
                f"probability vector sums to {v.sum():.12g}, not 1 within 1e-8")
        return self


def point_mass(space: TruncatedSpace, m, time: float = 0.0) -> ProbabilityVector:
    """Distribution concentrated at one state."""
    v = np.zeros(space.size)
    v[space.index_of(m)] = 1.0
    return ProbabilityVector(values=v, time=time)


@dataclass
class Trajectory:
    """Solution snapshots on a time grid plus truncation diagnostics.

    `max_drift` is the worst pre-renormalization |sum(p) - 1| and
    `min_entry` the worst pre-clip entry seen at any internal step.
    """

    grid: np.ndarray
    probabilities: np.ndarray  # (len(grid), space size)
    tail_mass_series: np.ndarray
    max_drift: float = 0.0
    min_entry: float = 0.0

    def snapshot(self, i: int) -> ProbabilityVector:
        return ProbabilityVector(values=self.probabilities[i], time=float(self.grid[i]))

    def __len__(self) -> int:
        return len(self.grid)


class GeneratorTemplate:
    """Per-(model, space) sparsity structure with time-dependent values.

    The structure (which entry feeds which) is fixed; only the rate values
    change with t, so repeated assembly inside the integrator stays cheap.
    """

    def __init__(self, model: ModelSpec, space: TruncatedSpace):
        self.model = model
        self.space = space
        d, coords = model.dimension, space.coords
        self.can_birth = np.empty((d, space.size), dtype=bool)
        self.birth_src, self.birth_dst = [], []
        self.death_src, self.death_dst = [], []
        for jj in range(d):
            self.can_birth[jj] = coords[:, jj] < space.caps[jj]
            src = np.nonzero(self.can_birth[jj])[0]
            up = coords[src].copy()
            up[:, jj] += 1
            self.birth_src.append(src)
            self.birth_dst.append(np.array(
                [space.index_of(tuple(row)) for row in up], dtype=np.int64))
            src = np.nonzero(coords[:, jj] > 0)[0]
            dn = coords[src].copy()
            dn[:, jj] -= 1
            self.death_src.append(src)
            self.death_dst.append(np.array(
                [space.index_of(tuple(row)) for row in dn], dtype=np.int64))

    def rates(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Raw (unsuppressed) birth and gated death rates, shape (d, size)."""
        d, coords = self.model.dimension, self.space.coords
        birth = np.empty((d, self.space.size))
        death = np.empty((d, self.space.size))
        for j in range(1, d + 1):
            birth[j - 1] = self.model.birth_values(j, coords, t)
            death[j - 1] = self.model.death_values(j, coords, t)
        return birth, death

    def apply(self, t: float, p: np.ndarray) -> np.ndarray:
        """Compute A(t) p without materializing the matrix."""
        birth, death = self.rates(t)
        out = -((birth * self.can_birth).sum(axis=0) + death.sum(axis=0)) * p
        for jj in range(self.model.dimension):
            src = self.birth_src[jj]
            out[self.birth_dst[jj]] += birth[jj, src] * p[src]
            src = self.death_src[jj]
            out[self.death_dst[jj]] += death[jj, src] * p[src]
        return out

    def matrix(self, t: float) -> GeneratorMatrix:
        birth, death = self.rates(t)
        diag = -((birth * self.can_birth).sum(axis=0) + death.sum(axis=0))
        entries: dict[tuple[int, int], float] = {}
        for i in range(self.space.size):
            if diag[i] != 0.0:
                entries[(i, i)] = diag[i]
        for jj in range(self.model.dimension):
            for src, dst, vals in ((self.birth_src[jj], self.birth_dst[jj], birth[jj]),
                                   (self.death_src[jj], self.death_dst[jj], death[jj])):
                for s, r in zip(src, dst):
                    v = vals[s]
                    if v != 0.0:
                        key = (int(r), int(s))
                        entries[key] = entries.get(key, 0.0) + v
        return GeneratorMatrix(dimension=self.space.size, entries=entries,
                               timestamp=float(t))


def assemble_generator(model: ModelSpec, space: TruncatedSpace,
                       t: float) -> GeneratorMatrix:
    """Assemble A(t) on the truncated space (reflecting truncation)."""
    if t < 0.0:
        raise ValueError(f"time must be >= 0, got {t}")
    return GeneratorTemplate(model, space).matrix(t)


def max_internal_step(model: ModelSpec) -> float:
    """Stability-motivated internal step cap 0.1 / (2 d (L + M))."""
    scale = 2.0 * model.dimension * (model.birth_cap + model.death_cap)
    return STEP_SAFETY / scale if scale > 0.0 else math.inf


def integrate(model: ModelSpec, space: TruncatedSpace, p0: ProbabilityVector,
              grid, tail_threshold: float | None = None) -> Trajectory:
    """Integrate the forward system from p0 over the given time grid.

    Fixed-step RK4; each grid interval is split into equal internal steps no
    longer than `max_internal_step(model)`, so runs are bit-reproducible.
    `tail_threshold`, when given, turns the tail-mass diagnostic into a hard
    error (truncation too small); by default it is only recorded.
    """
    p0.validate()
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("grid must be a non-empty 1-d array of times")
    if abs(grid[0] - p0.time) > 1e-12:
        raise ValueError(
            f"grid starts at {grid[0]}, initial condition is at {p0.time}")
    if len(grid) > 1 and not np.all(np.diff(grid) > 0.0):
        raise ValueError("grid times must be strictly increasing")
    if len(p0.values) != space.size:
        raise ValueError(
            f"initial vector has {len(p0.values)} entries, space has {space.size}")

    template = GeneratorTemplate(model, space)
    h_max = max_internal_step(model)
    n_pts = len(grid)
    probs = np.empty((n_pts, space.size))
    tails = np.empty(n_pts)
    probs[0] = p0.values
    tails[0] = float(p0.values[space.at_cap_mask].sum())
    max_drift = 0.0
    min_entry = float(np.min(p0.values, initial=0.0))

    p = np.asarray(p0.values, dtype=float).copy()
    for i in range(1, n_pts):
        t0, t1 = grid[i - 1], grid[i]
        n_sub = max(1, math.ceil((t1 - t0) / h_max)) if math.isfinite(h_max) else 1
        h = (t1 - t0) / n_sub
        if h < 1e-14 * max(1.0, abs(t1)):
            raise IntegrationError(
                f"step underflow: interval [{t0}, {t1}] split into {n_sub} steps")
        t = t0
        for _ in range(n_sub):
            k1 = template.apply(t, p)
            k2 = template.apply(t + 0.5 * h, p + 0.5 * h * k1)
            k3 = template.apply(t + 0.5 * h, p + 0.5 * h * k2)
            k4 = template.apply(t + h, p + h * k3)
            p = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
            s = p.sum()
            drift = abs(s - 1.0)
            max_drift = max(max_drift, drift)
            if drift > DRIFT_TOL:
                raise IntegrationError(
                    f"normalization drift {drift:.3e} at t={t:.6g} exceeds "
                    f"{DRIFT_TOL:g}; stepping too coarse")
            min_entry = min(min_entry, float(p.min()))
            np.maximum(p, 0.0, out=p)
            p /= p.sum()
        probs[i] = p
        tails[i] = float(p[space.at_cap_mask].sum())
        if tail_threshold is not None and tails[i] > tail_threshold:
            raise TruncationError(
                f"tail mass {tails[i]:.3e} at t={grid[i]:.6g} exceeds "
                f"threshold {tail_threshold:g}; enlarge the truncation caps")
    return Trajectory(grid=grid, probabilities=probs, tail_mass_series=tails,
                      max_drift=max_drift, min_entry=min_entry)


def l1_norm(v) -> float:
    """Sum of absolute entries."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("l1 norm of a vector with non-finite entries")
    return float(np.abs(v).sum())


def weighted_l1_norm(v, weights) -> float:
    """Sum of w_i |v_i| for strictly positive weights."""
    v = np.asarray(v, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(v)) or not np.all(np.isfinite(w)):
        raise ValueError("weighted l1 norm with non-finite input")
    if np.any(w <= 0.0):
        raise ValueError("weights must be strictly positive")
    return float((w * np.abs(v)).sum())


def tail_mass(p: ProbabilityVector, space: TruncatedSpace) -> float:
    """Total probability of states with any coordinate at its cap."""
    return float(np.asarray(p.values)[space.at_cap_mask].sum())


def write_trajectory_csv(traj: Trajectory, path):
    """CSV export: t,state_0,...,state_{n-1},tail_mass (17 significant digits)."""
    n = traj.probabilities.shape[1]
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"state_{i}" for i in range(n)) + ",tail_mass\n")
        for i, t in enumerate(traj.grid):
            row = [f"{t:.17g}"]
            row += [f"{x:.17g}" for x in traj.probabilities[i]]
            row.append(f"{traj.tail_mass_series[i]:.17g}")
            fh.write(",".join(row) + "\n")
