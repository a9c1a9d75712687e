"""Shapley value engines over coalition utility oracles.

Three estimators share the ``ShapleyResult`` container:

- ``shapley_exact``: full enumeration of the 2^n coalitions, weighting each
  marginal contribution by 1/(n*C(n-1,|S|)). Per-player sums use ``math.fsum``
  so the efficiency axiom (values summing to U(full) - U(empty)) holds to
  1e-9 even at the enumeration cap.
- ``shapley_montecarlo``: uniform random permutations from the portable
  SplitMix64 generator, scanned left to right; optional truncation zeroes the
  remaining marginals once a prefix utility is within ``truncation_tol`` of
  the full-set utility. ``truncation_tol = 0`` disables truncation entirely,
  keeping the estimator unbiased.
- ``loo_values``: leave-one-out differences, exactly n+1 oracle calls.

Exact rational variants back the test suite's permutation-equivalence checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import permutations as _all_permutations
from typing import Callable, Optional, Sequence

import numpy as np

from .coalition import Coalition
from .errors import CapacityError, PreconditionError, PromptShapError, UtilityOracleError
from .rng import SplitMix64

UtilityFn = Callable[[Coalition], float]

DEFAULT_EXACT_CAP = 20


class Method(str, Enum):
    EXACT = "exact"
    MONTE_CARLO = "montecarlo"
    LEAVE_ONE_OUT = "loo"


@dataclass(frozen=True)
class GameSpec:
    """A cooperative game: player count, deterministic utility oracle, and the
    declared utility of the empty coalition (the oracle must agree on it)."""

    n: int
    utility: UtilityFn
    u_empty: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise PreconditionError(f"game needs at least one player, got n={self.n}")


@dataclass(frozen=True)
class ShapleyResult:
    values: tuple[float, ...]
    stderr: tuple[float, ...]
    method: Method
    samples: int
    seed: Optional[int]
    u_full: float
    u_empty: float

    @property
    def n(self) -> int:
        return len(self.values)

    def to_json_dict(self, ids: Optional[Sequence[str]] = None) -> dict:
        n = self.n
        if ids is None:
            ids = [f"p{i}" for i in range(n)]
        ids = list(ids)
        if len(ids) != n:
            raise PreconditionError(f"got {len(ids)} player ids for {n} players")
        doc = {
            "method": self.method.value,
            "n": n,
            "samples": self.samples,
            "u_full": self.u_full,
            "u_empty": self.u_empty,
            "players": [
                {"id": ids[i], "value": self.values[i], "stderr": self.stderr[i]}
                for i in range(n)
            ],
        }
        if self.seed is not None:
            doc["seed"] = self.seed
        return doc


def _eval(game: GameSpec, coalition: Coalition, **context) -> float:
    """Evaluate the oracle, attaching coalition context to any failure."""
    try:
        return game.utility(coalition)
    except PromptShapError as exc:
        exc.details.setdefault("coalition", coalition.to_hex())
        for key, value in context.items():
            exc.details.setdefault(key, value)
        raise
    except Exception as exc:
        raise UtilityOracleError(
            f"utility oracle failed on coalition {coalition.to_hex()}: {exc}",
            coalition=coalition.to_hex(),
            **context,
        ) from exc


def shapley_weight(n: int, s: int) -> Fraction:
    """Exact coefficient 1/(n*C(n-1,s)) applied to a size-s coalition's marginal."""
    if n < 1 or not 0 <= s <= n - 1:
        raise PreconditionError(f"shapley_weight undefined for (n={n}, s={s})")
    return Fraction(1, n * math.comb(n - 1, s))


def marginal_contribution(game: GameSpec, coalition: Coalition, i: int) -> float:
    """U(S + {i}) - U(S) for i not already in S."""
    if i in coalition:
        raise PreconditionError(f"player {i} is already in the coalition")
    with_i = coalition.add(i)
    return _eval(game, with_i) - _eval(game, coalition)


def _utility_table(game: GameSpec) -> list[float]:
    # ascending mask order is the documented deterministic iteration order
    return [_eval(game, Coalition(mask, game.n)) for mask in range(1 << game.n)]


def shapley_exact(game: GameSpec, exact_cap: int = DEFAULT_EXACT_CAP) -> ShapleyResult:
    n = game.n
    if n > exact_cap:
        raise CapacityError(
            f"n={n} exceeds the exact enumeration cap {exact_cap}; "
            "use shapley_montecarlo for larger games",
            n=n,
            exact_cap=exact_cap,
        )
    table = _utility_table(game)
    weights = [float(shapley_weight(n, s)) for s in range(n)]
    popcount = [mask.bit_count() for mask in range(1 << n)]
    values = []
    for i in range(n):
        bit = 1 << i
        values.append(
            math.fsum(
                weights[popcount[mask]] * (table[mask | bit] - table[mask])
                for mask in range(1 << n)
                if not mask & bit
            )
        )
    return ShapleyResult(
        values=tuple(values),
        stderr=(0.0,) * n,
        method=Method.EXACT,
        samples=0,
        seed=None,
        u_full=table[-1],
        u_empty=table[0],
    )


def shapley_exact_rational(n: int, utility: Callable[[Coalition], Fraction],
                           exact_cap: int = 16) -> list[Fraction]:
    """Exact-arithmetic twin of ``shapley_exact`` for reference checks."""
    if n > exact_cap:
        raise CapacityError(f"n={n} exceeds the rational enumeration cap {exact_cap}")
    table = [Fraction(utility(Coalition(mask, n))) for mask in range(1 << n)]
    weights = [shapley_weight(n, s) for s in range(n)]
    values = []
    for i in range(n):
        bit = 1 << i
        total = Fraction(0)
        for mask in range(1 << n):
            if not mask & bit:
                total += weights[mask.bit_count()] * (table[mask | bit] - table[mask])
        values.append(total)
    return values


def shapley_permutation_rational(n: int, utility: Callable[[Coalition], Fraction],
                                 cap: int = 8) -> list[Fraction]:
    """Brute-force average of per-permutation marginals over all n! orderings."""
    if n > cap:
        raise CapacityError(f"n={n} exceeds the n! brute-force cap {cap}")
    totals = [Fraction(0)] * n
    for perm in _all_permutations(range(n)):
        mask = 0
        prev = Fraction(utility(Coalition(0, n)))
        for p in perm:
            mask |= 1 << p
            cur = Fraction(utility(Coalition(mask, n)))
            totals[p] += cur - prev
            prev = cur
    count = math.factorial(n)
    return [t / count for t in totals]


def shapley_montecarlo(game: GameSpec, permutations: int, truncation_tol: float = 0.0,
                       seed: int = 0) -> ShapleyResult:
    if permutations < 1:
        raise PreconditionError(f"permutation count must be >= 1, got {permutations}")
    if truncation_tol < 0:
        raise PreconditionError(f"truncation_tol must be >= 0, got {truncation_tol}")
    n = game.n
    u_full = _eval(game, Coalition.full(n))
    u_empty = _eval(game, Coalition.empty(n))
    truncate = truncation_tol > 0
    rng = SplitMix64(seed)
    perm = list(range(n))
    marginals = np.zeros((permutations, n), dtype=np.float64)
    for t in range(permutations):
        rng.shuffle(perm)
        mask = 0
        prev = u_empty
        done = truncate and abs(prev - u_full) <= truncation_tol
        for pos, p in enumerate(perm):
            if done:
                break  # remaining marginals stay 0
            mask |= 1 << p
            cur = _eval(
                game,
                Coalition(mask, n),
                permutation_index=t,
                prefix=tuple(perm[: pos + 1]),
            )
            marginals[t, p] = cur - prev
            prev = cur
            if truncate and abs(cur - u_full) <= truncation_tol:
                done = True
    values = []
    stderr = []
    for i in range(n):
        column = marginals[:, i]
        mean = math.fsum(column) / permutations
        values.append(mean)
        if permutations == 1:
            stderr.append(0.0)
        else:
            var = math.fsum((x - mean) ** 2 for x in column) / (permutations - 1)
            stderr.append(math.sqrt(var / permutations))
    return ShapleyResult(
        values=tuple(values),
        stderr=tuple(stderr),
        method=Method.MONTE_CARLO,
        samples=permutations,
        seed=seed,
        u_full=u_full,
        u_empty=u_empty,
    )


def loo_values(game: GameSpec) -> ShapleyResult:
    """U(full) - U(full minus i) per player; never evaluates the empty coalition,
    so the result echoes the game's declared u_empty."""
    n = game.n
    full = Coalition.full(n)
    u_full = _eval(game, full)
    values = tuple(u_full - _eval(game, full.remove(i)) for i in range(n))
    return ShapleyResult(
        values=values,
        stderr=(0.0,) * n,
        method=Method.LEAVE_ONE_OUT,
        samples=0,
        seed=None,
        u_full=u_full,
        u_empty=game.u_empty,
    )
