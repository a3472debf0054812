"""One-dimensional projections: marginals, effective rates, reduced systems.

The count of one type, X_j(t), is in general non-Markovian, but its marginal
x_k(t) = sum over {m : m_j = k} of p_m(t) satisfies an exact tridiagonal
system whose birth/death coefficients are the probability-weighted averages
of the per-state rates on each level set. Those effective rates inherit the
declared two-sided bounds, which is what the decay certificates feed on.

The total-count process Z(t) = |X(t)| is handled by the same machinery with
level sets {m : |m| = k}. Its per-state birth intensity excludes births
suppressed at the truncation caps, so the projected system matches the
truncated dynamics exactly (for a single coordinate the cap only affects the
top level, where the projected system suppresses the birth term anyway).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kolmogorov import GeneratorTemplate, ProbabilityVector, Trajectory
from .model import ModelSpec, TruncatedSpace

#: Coordinate token selecting the total-count projection.
TOTAL = "total"

#: Levels with marginal mass at or below this are flagged undefined.
ZERO_MARGINAL = 1e-14


def _levels(space: TruncatedSpace, coordinate) -> tuple[int, np.ndarray]:
    """Level count K and the per-state level index for a projection."""
    if coordinate == TOTAL:
        return int(sum(space.caps)), space.coords.sum(axis=1)
    j = int(coordinate)
    if not 1 <= j <= space.dimension:
        raise ValueError(f"coordinate must be 1..{space.dimension} or '{TOTAL}'")
    return space.caps[j - 1], space.coords[:, j - 1]


@dataclass
class Marginal:
    """Distribution of one projection at a time point; values[k] = x_k."""

    coordinate: int | str
    values: np.ndarray
    time: float

    def validate(self):
        v = self.values
        if v.min(initial=0.0) < -1e-12 or abs(v.sum() - 1.0) > 1e-8:
            raise ValueError("marginal is not a probability vector")
        return self


@dataclass
class EffectiveRates:
    """Projected birth/death intensities at one time point.

    birth[k], death[k] are the weighted averages over the level set
    {m_j = k}; death[0] is pinned to 0. Levels whose marginal mass is at or
    below ZERO_MARGINAL are flagged undefined and carry the convention value
    (the declared lower bound; 0 for the total projection) - any value in
    the admissible rectangle leaves the projected dynamics unchanged there,
    since it multiplies zero mass.
    """

    coordinate: int | str
    birth: np.ndarray
    death: np.ndarray
    defined: np.ndarray
    time: float


@dataclass
class TridiagonalSystem:
    """Transposed intensity matrix of the projected chain on levels 0..K."""

    sub: np.ndarray    # sub[k] = birth rate k -> k+1, k = 0..K-1
    diag: np.ndarray   # diag[k] = -(birth_k [if k < K] + death_k)
    sup: np.ndarray    # sup[k] = death rate k+1 -> k, k = 0..K-1
    time: float

    @property
    def size(self) -> int:
        return len(self.diag)

    def to_dense(self) -> np.ndarray:
        a = np.diag(self.diag)
        k = np.arange(len(self.sub))
        a[k + 1, k] = self.sub
        a[k, k + 1] = self.sup
        return a

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = self.diag * x
        out[1:] += self.sub * x[:-1]
        out[:-1] += self.sup * x[1:]
        return out

    def column_sums(self) -> np.ndarray:
        s = self.diag.copy()
        s[:-1] += self.sub
        s[1:] += self.sup
        return s


@dataclass
class ReducedSystem:
    """Inhomogeneous system for z = (x_1, ..., x_K) after eliminating x_0.

    matrix[i, j] = a_{ij} - a_{i0} (1-based level indices) and
    forcing = (birth_0, 0, ..., 0); for any distribution x on levels,
    matrix @ x[1:] + forcing reproduces rows 1..K of the tridiagonal system.
    """

    matrix: np.ndarray
    forcing: np.ndarray
    time: float


def marginal(p: ProbabilityVector, space: TruncatedSpace, coordinate) -> Marginal:
    """Project a distribution onto one coordinate (or the total count)."""
    K, lev = _levels(space, coordinate)
    vals = np.bincount(lev, weights=np.asarray(p.values, dtype=float),
                       minlength=K + 1)
    return Marginal(coordinate=coordinate, values=vals, time=p.time)


def _per_state_rates(model: ModelSpec, space: TruncatedSpace, coordinate,
                     t: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-state birth/death intensity of the projection's driving type(s)."""
    coords = space.coords
    if coordinate == TOTAL:
        birth = np.zeros(space.size)
        death = np.zeros(space.size)
        for j in range(1, space.dimension + 1):
            suppressed = coords[:, j - 1] >= space.caps[j - 1]
            birth += np.where(suppressed, 0.0, model.birth_values(j, coords, t))
            death += model.death_values(j, coords, t)
        return birth, death
    j = int(coordinate)
    return model.birth_values(j, coords, t), model.death_values(j, coords, t)


def _conventions(model: ModelSpec, coordinate) -> tuple[float, float]:
    if coordinate == TOTAL:
        return 0.0, 0.0
    b = model.bounds[int(coordinate) - 1]
    return b.birth_lo, b.death_lo


def effective_rates(p: ProbabilityVector, model: ModelSpec,
                    space: TruncatedSpace, coordinate, t: float) -> EffectiveRates:
    """Probability-weighted projected rates at time t.

    birth[k] = sum_{m_j = k} lambda_j(m, t) p_m / sum_{m_j = k} p_m and
    analogously death[k]; levels with no mass get the convention value and
    defined[k] = False instead of a 0/0 error.
    """
    K, lev = _levels(space, coordinate)
    birth_m, death_m = _per_state_rates(model, space, coordinate, t)
    pv = np.asarray(p.values, dtype=float)
    mass = np.bincount(lev, weights=pv, minlength=K + 1)
    num_b = np.bincount(lev, weights=birth_m * pv, minlength=K + 1)
    num_d = np.bincount(lev, weights=death_m * pv, minlength=K + 1)
    defined = mass > ZERO_MARGINAL
    conv_b, conv_d = _conventions(model, coordinate)
    safe = np.where(defined, mass, 1.0)
    birth = np.where(defined, num_b / safe, conv_b)
    death = np.where(defined, num_d / safe, conv_d)
    death[0] = 0.0
    return EffectiveRates(coordinate=coordinate, birth=birth, death=death,
                          defined=defined, time=float(t))


def assemble_projected(rates: EffectiveRates) -> TridiagonalSystem:
    """Tridiagonal transposed intensity matrix of the projected chain.

    Birth out of the top level K is suppressed, consistent with the
    reflecting truncation of the full system.
    """
    birth, death = rates.birth, rates.death
    K = len(birth) - 1
    sub = birth[:K].copy()
    sup = death[1:].copy()
    diag = -(death.copy())
    diag[:K] -= birth[:K]
    return TridiagonalSystem(sub=sub, diag=diag, sup=sup, time=rates.time)


def reduce(sys: TridiagonalSystem, rates: EffectiveRates) -> ReducedSystem:
    """Eliminate level 0 using x_0 = 1 - sum_{i>=1} x_i."""
    K = sys.size - 1
    dense = sys.to_dense()
    b = dense[1:, 1:] - dense[1:, :1]
    f = np.zeros(K)
    if K >= 1:
        f[0] = rates.birth[0]
    return ReducedSystem(matrix=b, forcing=f, time=sys.time)


def marginal_series(traj: Trajectory, space: TruncatedSpace,
                    coordinate) -> np.ndarray:
    """Marginals at every grid point, shape (len(grid), K+1)."""
    K, lev = _levels(space, coordinate)
    out = np.empty((len(traj), K + 1))
    for i in range(len(traj)):
        out[i] = np.bincount(lev, weights=traj.probabilities[i], minlength=K + 1)
    return out


def effective_rates_series(traj: Trajectory, model: ModelSpec,
                           space: TruncatedSpace, coordinate) -> list[EffectiveRates]:
    return [effective_rates(traj.snapshot(i), model, space, coordinate,
                            float(traj.grid[i])) for i in range(len(traj))]


def projection_consistency_residual(traj: Trajectory, model: ModelSpec,
                                    space: TruncatedSpace, coordinate):
    """l1 residual of dx/dt = (projected system) x along a trajectory.

    dx/dt is a centered finite difference of the marginal, so on a uniform
    grid of step h the residual is O(h^2). Returns (interior grid times,
    residuals) for inspection.
    """
    if len(traj) < 3:
        raise ValueError("residual needs at least 3 grid points")
    xs = marginal_series(traj, space, coordinate)
    times = traj.grid
    res = np.empty(len(traj) - 2)
    for i in range(1, len(traj) - 1):
        dx = (xs[i + 1] - xs[i - 1]) / (times[i + 1] - times[i - 1])
        rates = effective_rates(traj.snapshot(i), model, space, coordinate,
                                float(times[i]))
        sys = assemble_projected(rates)
        res[i - 1] = float(np.abs(dx - sys.apply(xs[i])).sum())
    return times[1:-1].copy(), res


def reduced_family(traj: Trajectory, model: ModelSpec, space: TruncatedSpace,
                   coordinate) -> list[ReducedSystem]:
    """Reduced systems at every grid point of a trajectory."""
    out = []
    for i in range(len(traj)):
        rates = effective_rates(traj.snapshot(i), model, space, coordinate,
                                float(traj.grid[i]))
        out.append(reduce(assemble_projected(rates), rates))
    return out


def write_projection_csv(path, traj: Trajectory, model: ModelSpec,
                         space: TruncatedSpace, coordinate):
    """CSV export: t,k,x_k,lambda_tilde_k,mu_tilde_k,defined."""
    xs = marginal_series(traj, space, coordinate)
    with open(path, "w") as fh:
        fh.write("t,k,x_k,lambda_tilde_k,mu_tilde_k,defined\n")
        for i in range(len(traj)):
            t = float(traj.grid[i])
            rates = effective_rates(traj.snapshot(i), model, space, coordinate, t)
            for k in range(xs.shape[1]):
                fh.write(f"{t:.17g},{k},{xs[i, k]:.17g},"
                         f"{rates.birth[k]:.17g},{rates.death[k]:.17g},"
                         f"{int(rates.defined[k])}\n")


__all__ = [
    "TOTAL", "ZERO_MARGINAL", "Marginal", "EffectiveRates",
    "TridiagonalSystem", "ReducedSystem", "marginal", "effective_rates",
    "assemble_projected", "reduce", "marginal_series",
    "effective_rates_series", "projection_consistency_residual",
    "reduced_family", "write_projection_csv",
]
