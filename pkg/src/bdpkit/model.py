"""Multidimensional inhomogeneous birth-death models on truncated state spaces.

A model has d particle types. From state m = (m_1, ..., m_d) the chain can
jump to m + e_j (birth of type j, rate lambda_j(m, t)) or to m - e_j (death
of type j, rate mu_j(m, t)). Rates are built from a closed algebra of rule
kinds so that configurations stay serializable and evaluation is
deterministic. Every evaluation is checked eagerly against the declared
per-type bounds: all decay certificates consume those bounds, so a silent
violation would invalidate them.

Conventions:
- type indices j are 1-based in the public API (j = 1..d),
- death rates are gated by m_j >= 1 (no death from an empty class); death
  bounds therefore apply only to states with m_j >= 1.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

MultiIndex = tuple[int, ...]

#: Hard ceiling on enumerated state-space size.
DEFAULT_MAX_SPACE_SIZE = 2_000_000

#: Absolute slack used when checking evaluated rates against declared bounds.
BOUND_TOL = 1e-9

RULE_KINDS = (
    "constant",
    "periodic-sinusoidal",
    "state-affine",
    "state-affine-capped",
    "table-driven",
)


class ModelError(ValueError):
    """Invalid model definition or state-space usage."""


class RateRuleError(ModelError):
    """A rate rule produced a negative or non-finite value."""


class RateBoundError(ModelError):
    """An evaluated rate fell outside the declared bounds."""

    def __init__(self, kind: str, j: int, state, t: float, value: float,
                 lo: float, hi: float):
        self.kind = kind
        self.j = j
        self.state = tuple(int(c) for c in state)
        self.t = float(t)
        self.value = float(value)
        super().__init__(
            f"{kind} rate of type {j} at state {self.state}, t={t:g}: "
            f"value {value:.12g} outside declared bounds [{lo:g}, {hi:g}]"
        )


@dataclass(frozen=True)
class RateBounds:
    """Declared per-type rate bounds.

    birth_lo/birth_hi bracket the birth rate for every state and time;
    death_lo/death_hi bracket the death rate on states with m_j >= 1.
    """

    birth_lo: float
    birth_hi: float
    death_lo: float
    death_hi: float

    def __post_init__(self):
        for lo, hi, which in ((self.birth_lo, self.birth_hi, "birth"),
                              (self.death_lo, self.death_hi, "death")):
            if not (0.0 <= lo <= hi < math.inf):
                raise ModelError(
                    f"{which} bounds must satisfy 0 <= lo <= hi < inf, "
                    f"got [{lo}, {hi}]")


@dataclass(frozen=True)
class RateRule:
    """One evaluable intensity rule.

    kind / params:
      constant:             (c,)                      -> c
      periodic-sinusoidal:  (base, amp[, phase])      -> base + amp*sin(2*pi*t/period + phase)
      state-affine:         (c0, c1, ..., cd)         -> c0 + sum_i ci*m_i
      state-affine-capped:  (c0, c1, ..., cd, cap)    -> min(affine, cap)
      table-driven:         (v0, v1, ..., vK)         -> v[min(m_own, K)]

    `period` is required (> 0) for the periodic kind and ignored otherwise.
    The table-driven kind is keyed on the owning type's own coordinate.
    """

    kind: str
    params: tuple[float, ...]
    period: float = 0.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ModelError(f"unknown rate rule kind {self.kind!r}; "
                             f"expected one of {RULE_KINDS}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if not self.params:
            raise ModelError(f"{self.kind} rule needs at least one parameter")
        if not all(math.isfinite(p) for p in self.params):
            raise ModelError(f"{self.kind} rule has non-finite parameters")
        if self.kind == "periodic-sinusoidal":
            if len(self.params) not in (2, 3):
                raise ModelError("periodic-sinusoidal takes (base, amp[, phase])")
            if not self.period > 0.0:
                raise ModelError("periodic-sinusoidal needs period > 0")
        if self.kind == "state-affine-capped" and len(self.params) < 2:
            raise ModelError("state-affine-capped takes (c0, ..., cd, cap)")

    def affine_len(self) -> int | None:
        """Expected d+1 coefficient count, or None for non-affine kinds."""
        if self.kind == "state-affine":
            return len(self.params)
        if self.kind == "state-affine-capped":
            return len(self.params) - 1
        return None

    def value_one(self, m: MultiIndex, own: int, t: float) -> float:
        """Scalar evaluation at one state; `own` is the 0-based type index."""
        k = self.kind
        if k == "constant":
            return self.params[0]
        if k == "periodic-sinusoidal":
            base, amp = self.params[0], self.params[1]
            phase = self.params[2] if len(self.params) == 3 else 0.0
            return base + amp * math.sin(2.0 * math.pi * t / self.period + phase)
        if k == "state-affine":
            v = self.params[0]
            for c, mi in zip(self.params[1:], m):
                v += c * mi
            return v
        if k == "state-affine-capped":
            v = self.params[0]
            for c, mi in zip(self.params[1:-1], m):
                v += c * mi
            return min(v, self.params[-1])
        # table-driven
        tab = self.params
        idx = m[own]
        return tab[idx] if idx < len(tab) else tab[-1]

    def value_many(self, coords: np.ndarray, own: int, t: float) -> np.ndarray:
        """Vectorized evaluation over an (n, d) coordinate matrix."""
        n = coords.shape[0]
        k = self.kind
        if k == "constant":
            return np.full(n, self.params[0])
        if k == "periodic-sinusoidal":
            base, amp = self.params[0], self.params[1]
            phase = self.params[2] if len(self.params) == 3 else 0.0
            return np.full(n, base + amp * math.sin(2.0 * math.pi * t / self.period + phase))
        if k == "state-affine":
            c = np.asarray(self.params)
            return c[0] + coords @ c[1:]
        if k == "state-affine-capped":
            c = np.asarray(self.params[:-1])
            return np.minimum(c[0] + coords @ c[1:], self.params[-1])
        tab = np.asarray(self.params)
        return tab[np.minimum(coords[:, own], len(tab) - 1)]


@dataclass(frozen=True)
class ModelSpec:
    """Immutable model definition: dimension, rules, bounds, global caps.

    `birth_cap` / `death_cap` are the global constants L and M bounding every
    birth / death rate; they feed both the integrator step control and the
    Monte Carlo dominating clock. Safe to share read-only across workers.
    """

    dimension: int
    birth_rules: tuple[RateRule, ...]
    death_rules: tuple[RateRule, ...]
    bounds: tuple[RateBounds, ...]
    birth_cap: float
    death_cap: float

    def __post_init__(self):
        d = self.dimension
        if d < 1:
            raise ModelError(f"dimension must be >= 1, got {d}")
        for name, seq in (("birth_rules", self.birth_rules),
                          ("death_rules", self.death_rules),
                          ("bounds", self.bounds)):
            if len(seq) != d:
                raise ModelError(f"{name} must have {d} entries, got {len(seq)}")
        for rule in self.birth_rules + self.death_rules:
            want = rule.affine_len()
            if want is not None and want != d + 1:
                raise ModelError(
                    f"affine rule needs {d + 1} coefficients (c0..c{d}), "
                    f"got {want}")
        hi_b = max(b.birth_hi for b in self.bounds)
        hi_d = max(b.death_hi for b in self.bounds)
        if self.birth_cap < hi_b - BOUND_TOL:
            raise ModelError(
                f"global birth cap {self.birth_cap} below max birth_hi {hi_b}")
        if self.death_cap < hi_d - BOUND_TOL:
            raise ModelError(
                f"global death cap {self.death_cap} below max death_hi {hi_d}")

    # -- vectorized evaluation over an (n, d) coordinate matrix --

    def birth_values(self, j: int, coords: np.ndarray, t: float) -> np.ndarray:
        """Birth rates lambda_j at every row of `coords`; j is 1-based."""
        jj = self._type_index(j)
        vals = self.birth_rules[jj].value_many(coords, jj, t)
        b = self.bounds[jj]
        self._check_many("birth", j, vals, coords, t, b.birth_lo, b.birth_hi, None)
        return vals

    def death_values(self, j: int, coords: np.ndarray, t: float) -> np.ndarray:
        """Death rates mu_j, gated to 0 where m_j = 0; j is 1-based."""
        jj = self._type_index(j)
        vals = self.death_rules[jj].value_many(coords, jj, t)
        occupied = coords[:, jj] > 0
        vals = np.where(occupied, vals, 0.0)
        b = self.bounds[jj]
        self._check_many("death", j, vals, coords, t, b.death_lo, b.death_hi, occupied)
        return vals

    # -- scalar evaluation (hot path of the Monte Carlo simulator) --

    def birth_value_one(self, j: int, m: MultiIndex, t: float) -> float:
        jj = self._type_index(j)
        v = self.birth_rules[jj].value_one(m, jj, t)
        b = self.bounds[jj]
        self._check_one("birth", j, v, m, t, b.birth_lo, b.birth_hi)
        return v

    def death_value_one(self, j: int, m: MultiIndex, t: float) -> float:
        jj = self._type_index(j)
        if m[jj] == 0:
            return 0.0
        v = self.death_rules[jj].value_one(m, jj, t)
        b = self.bounds[jj]
        self._check_one("death", j, v, m, t, b.death_lo, b.death_hi)
        return v

    def _type_index(self, j: int) -> int:
        if not 1 <= j <= self.dimension:
            raise ModelError(f"type index j={j} outside 1..{self.dimension}")
        return j - 1

    @staticmethod
    def _check_one(kind, j, v, m, t, lo, hi):
        if not math.isfinite(v) or v < 0.0:
            raise RateRuleError(
                f"{kind} rule of type {j} at state {tuple(m)}, t={t:g} "
                f"evaluated to {v!r}")
        if v < lo - BOUND_TOL or v > hi + BOUND_TOL:
            raise RateBoundError(kind, j, m, t, v, lo, hi)

    @staticmethod
    def _check_many(kind, j, vals, coords, t, lo, hi, where):
        bad = ~np.isfinite(vals) | (vals < 0.0)
        if where is not None:
            bad &= where
        if bad.any():
            i = int(np.argmax(bad))
            raise RateRuleError(
                f"{kind} rule of type {j} at state {tuple(coords[i])}, "
                f"t={t:g} evaluated to {vals[i]!r}")
        viol = (vals < lo - BOUND_TOL) | (vals > hi + BOUND_TOL)
        if where is not None:
            viol &= where
        if viol.any():
            i = int(np.argmax(viol))
            raise RateBoundError(kind, j, coords[i], t, vals[i], lo, hi)


class TruncatedSpace:
    """Enumerated box prod_j {0..N_j} in graded-lexicographic order.

    States are sorted by total count |m| ascending, ties broken
    lexicographically, so low-population states come first and truncation
    error concentrates at the tail of the probability vector. The
    enumeration is deterministic and stable across runs.
    """

    def __init__(self, caps, max_size: int = DEFAULT_MAX_SPACE_SIZE):
        caps = tuple(int(c) for c in caps)
        if not caps:
            raise ModelError("caps must be a non-empty list")
        if any(c < 1 for c in caps):
            raise ModelError(f"every cap must be >= 1, got {caps}")
        size = math.prod(c + 1 for c in caps)
        if size > max_size:
            raise ModelError(
                f"truncated space has {size} states, over the ceiling "
                f"{max_size}; truncation is infeasible")
        self.caps = caps
        self.size = size
        self.dimension = len(caps)
        states = sorted(itertools.product(*(range(c + 1) for c in caps)),
                        key=lambda m: (sum(m), m))
        self.coords = np.array(states, dtype=np.int64)
        self._index = {m: i for i, m in enumerate(states)}
        self.at_cap_mask = (self.coords == np.asarray(caps)).any(axis=1)

    def index_of(self, m) -> int:
        m = tuple(int(c) for c in m)
        if len(m) != self.dimension:
            raise ModelError(
                f"state {m} has {len(m)} coordinates, space has {self.dimension}")
        try:
            return self._index[m]
        except KeyError:
            raise ModelError(f"state {m} outside the box {self.caps}") from None

    def state_of(self, i: int) -> MultiIndex:
        if not 0 <= i < self.size:
            raise ModelError(f"linear index {i} outside 0..{self.size - 1}")
        return tuple(int(c) for c in self.coords[i])

    def states(self):
        """All states in enumeration order, as tuples."""
        return [tuple(int(c) for c in row) for row in self.coords]

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"TruncatedSpace(caps={self.caps}, size={self.size})"


def build_space(caps, max_size: int = DEFAULT_MAX_SPACE_SIZE) -> TruncatedSpace:
    """Enumerate the truncated box for the given per-type caps."""
    return TruncatedSpace(caps, max_size=max_size)


def eval_rates(model: ModelSpec, j: int, m, t: float) -> tuple[float, float]:
    """Evaluate (birth, death) rates of type j (1-based) at state m, time t.

    Death is 0 whenever m_j = 0. Both values are checked against the
    declared bounds; a violation raises RateBoundError naming (j, m, t).
    """
    m = tuple(int(c) for c in m)
    if len(m) != model.dimension:
        raise ModelError(
            f"state {m} has {len(m)} coordinates, model has {model.dimension}")
    if any(c < 0 for c in m):
        raise ModelError(f"state {m} has a negative coordinate")
    if t < 0.0:
        raise ModelError(f"time must be >= 0, got {t}")
    return model.birth_value_one(j, m, t), model.death_value_one(j, m, t)
