"""Numerical verification of the valuation theory.

Four strands, each mirrored by an acceptance test:

- a combinatorial identity on Shapley coefficients, checked in exact rational
  arithmetic: (1/n)(1/C(n-1,k) + 1/C(n-1,k+1)) = 1/((n-1) C(n-2,k));
- a Lipschitz transfer bound: for mean-field games U(S) = mean of a scalar
  field g over member embeddings, |SV_i - SV_j| <= L ||e_i - e_j|| where L is
  the field's Lipschitz constant;
- interval bounds P(0.5-eps <= X <= 0.5+eps) for X ~ Be(alpha, beta): exact
  (incomplete beta), a normal approximation, and a linear Taylor polynomial
  (2 eps / (sqrt(2 pi) sigma)) (1 - (0.5-mu)^2 / (3 sigma^2)) with an
  out-of-validity flag;
- a single-classifier perturbation simulator: shifting one of N classifiers
  by delta moves the ensemble mean by delta/N exactly (asserted per instance)
  and flips at most L * delta / N of the decisions in expectation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import PreconditionError
from .game import GameSpec, shapley_exact
from .coalition import Coalition
from .rng import SplitMix64, derive_seed
from .special import beta_cdf, beta_mass_quad, normal_cdf


@dataclass(frozen=True)
class BetaSpec:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise PreconditionError(
                f"Beta shape parameters must be positive, got ({self.alpha}, {self.beta})"
            )

    @property
    def mu(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def sigma(self) -> float:
        s = self.alpha + self.beta
        return math.sqrt(self.alpha * self.beta / (s * s * (s + 1.0)))


# ---------------------------------------------------------------------------
# combinatorial identity


def lemma1_identity(n: int, k: int) -> tuple[Fraction, Fraction]:
    """Both sides of the coefficient identity as exact rationals."""
    if n < 2 or not 0 <= k <= n - 2:
        raise PreconditionError(f"identity needs n >= 2 and 0 <= k <= n-2, got (n={n}, k={k})")
    lhs = Fraction(1, n) * (
        Fraction(1, math.comb(n - 1, k)) + Fraction(1, math.comb(n - 1, k + 1))
    )
    rhs = Fraction(1, (n - 1) * math.comb(n - 2, k))
    return lhs, rhs


def lemma1_sweep(n_max: int = 64) -> dict:
    cases = 0
    failures = []
    for n in range(2, n_max + 1):
        for k in range(0, n - 1):
            lhs, rhs = lemma1_identity(n, k)
            cases += 1
            if lhs != rhs:
                failures.append({"n": n, "k": k, "lhs": str(lhs), "rhs": str(rhs)})
    return {"n_max": n_max, "cases": cases, "equal": not failures, "failures": failures}


# ---------------------------------------------------------------------------
# Lipschitz games


@dataclass(frozen=True)
class LipschitzGame:
    """Mean-field game over embeddings: U(S) = mean of g over members, U(empty) = 0.

    The declared Lipschitz constant is spot-checked on every embedding pair at
    construction; a violation means the caller's (g, L) declaration is wrong.
    """

    embeddings: np.ndarray
    field: Callable[[np.ndarray], float]
    lipschitz_l: float

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise PreconditionError("embeddings must be a non-empty 2-D array")
        if self.lipschitz_l <= 0:
            raise PreconditionError(f"Lipschitz constant must be positive, got {self.lipschitz_l}")
        object.__setattr__(self, "embeddings", emb)
        gvals = np.array([float(self.field(e)) for e in emb])
        object.__setattr__(self, "_gvals", gvals)
        n = emb.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                gap = abs(gvals[i] - gvals[j])
                allowed = self.lipschitz_l * float(np.linalg.norm(emb[i] - emb[j]))
                if gap > allowed + 1e-12:
                    raise PreconditionError(
                        f"field violates its declared Lipschitz constant on pair ({i}, {j}): "
                        f"|g_i - g_j| = {gap:.6g} > L * dist = {allowed:.6g}"
                    )

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def gvals(self) -> np.ndarray:
        return self._gvals

    def game(self) -> GameSpec:
        gvals = self._gvals

        def utility(coalition: Coalition) -> float:
            members = coalition.indices()
            if not members:
                return 0.0
            return math.fsum(gvals[i] for i in members) / len(members)

        return GameSpec(n=self.n, utility=utility, u_empty=0.0)


def make_affine_field(w: np.ndarray, c: float = 0.0):
    """g(e) = w . e + c with Lipschitz constant ||w||."""
    w = np.asarray(w, dtype=np.float64)

    def field(e: np.ndarray) -> float:
        return float(np.dot(w, e)) + c

    return field, float(np.linalg.norm(w))


def make_tanh_field(w: np.ndarray, c: float = 0.0):
    """g(e) = tanh(w . e + c); |tanh'| <= 1 gives Lipschitz constant ||w||."""
    w = np.asarray(w, dtype=np.float64)

    def field(e: np.ndarray) -> float:
        return math.tanh(float(np.dot(w, e)) + c)

    return field, float(np.linalg.norm(w))


def mean_field_shapley(gvals) -> np.ndarray:
    """Closed-form exact Shapley values of the mean-field game.

    For U(S) = mean of g over S and U(empty) = 0, averaging the marginal
    1/(k+1) (g_i - U-of-prefix) terms over permutation positions collapses to

        SV_i = (g_i + (g_i - mean_{j != i} g_j) (H_n - 1)) / n,

    with H_n the n-th harmonic number. Tests verify agreement with full
    enumeration, which makes this the exact-value oracle for games far above
    the enumeration cap.
    """
    g = np.asarray(gvals, dtype=np.float64)
    n = g.shape[0]
    if n == 1:
        return g.copy()
    harmonic = math.fsum(1.0 / m for m in range(1, n + 1))
    total = math.fsum(g)
    rest_mean = (total - g) / (n - 1)
    return (g + (g - rest_mean) * (harmonic - 1.0)) / n


def theorem1_experiment(game: LipschitzGame, trials: int, seed: int,
                        exact_cap: int = 20) -> dict:
    """Exact Shapley values vs the L ||e_i - e_j|| bound, over resampled games.

    Trial 0 uses the provided embeddings; each later trial redraws embeddings
    uniformly from [-1, 1]^d with a seed derived from the trial index, keeping
    the same field and constant. Pairs with identical embeddings define
    ratio = 0. A violation is a ratio above 1 + 1e-9.
    """
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    n, d = game.embeddings.shape
    max_ratio = 0.0
    violations = 0
    pairs_checked = 0
    for t in range(trials):
        if t == 0:
            lg = game
        else:
            rng = SplitMix64(derive_seed(seed, f"theorem1:{t}"))
            emb = np.array([[2.0 * rng.uniform() - 1.0 for _ in range(d)] for _ in range(n)])
            lg = LipschitzGame(emb, game.field, game.lipschitz_l)
        values = shapley_exact(lg.game(), exact_cap=exact_cap).values
        for i in range(n):
            for j in range(i + 1, n):
                dist = float(np.linalg.norm(lg.embeddings[i] - lg.embeddings[j]))
                diff = abs(values[i] - values[j])
                ratio = 0.0 if dist == 0.0 else diff / (game.lipschitz_l * dist)
                pairs_checked += 1
                if ratio > max_ratio:
                    max_ratio = ratio
                if ratio > 1.0 + 1e-9:
                    violations += 1
    return {
        "n": n,
        "d": d,
        "trials": trials,
        "seed": seed,
        "lipschitz_l": game.lipschitz_l,
        "pairs_checked": pairs_checked,
        "max_ratio": max_ratio,
        "violations": violations,
    }


# ---------------------------------------------------------------------------
# Beta interval bounds


def _check_eps(eps: float) -> None:
    if not 0.0 < eps < 0.5:
        raise PreconditionError(f"epsilon must lie in (0, 0.5), got {eps}")


def beta_interval_exact(spec: BetaSpec, eps: float) -> float:
    _check_eps(eps)
    return beta_cdf(spec.alpha, spec.beta, 0.5 + eps) - beta_cdf(spec.alpha, spec.beta, 0.5 - eps)


def beta_interval_quad(spec: BetaSpec, eps: float) -> float:
    """Independent quadrature evaluation of the same interval mass."""
    _check_eps(eps)
    return beta_mass_quad(spec.alpha, spec.beta, 0.5 - eps, 0.5 + eps)


def beta_interval_normal(spec: BetaSpec, eps: float) -> float:
    _check_eps(eps)
    mu, sigma = spec.mu, spec.sigma
    return normal_cdf((0.5 + eps - mu) / sigma) - normal_cdf((0.5 - eps - mu) / sigma)


@dataclass(frozen=True)
class PolyInterval:
    value: float
    leading_factor: float
    correction: float
    out_of_validity: bool
    reference_exact: float
    reference_normal: float


def beta_interval_poly(spec: BetaSpec, eps: float) -> PolyInterval:
    """Linear Taylor approximation of the interval mass, with a validity flag.

    The flag fires when the approximation cannot be trusted: leading factor
    above 1, value outside [0, 1], or overshooting the exact or normal
    interval by more than 10% relative.
    """
    _check_eps(eps)
    mu, sigma = spec.mu, spec.sigma
    leading = 2.0 * eps / (math.sqrt(2.0 * math.pi) * sigma)
    correction = 1.0 - (0.5 - mu) ** 2 / (3.0 * sigma * sigma)
    value = leading * correction
    exact = beta_interval_exact(spec, eps)
    normal = beta_interval_normal(spec, eps)
    flagged = (
        leading > 1.0
        or not 0.0 <= value <= 1.0
        or value > 1.1 * normal
        or value > 1.1 * exact
    )
    return PolyInterval(
        value=value,
        leading_factor=leading,
        correction=correction,
        out_of_validity=flagged,
        reference_exact=exact,
        reference_normal=normal,
    )


def beta_bounds_report(spec: BetaSpec, eps: float) -> dict:
    poly = beta_interval_poly(spec, eps)
    return {
        "alpha": spec.alpha,
        "beta": spec.beta,
        "epsilon": eps,
        "mu": spec.mu,
        "sigma": spec.sigma,
        "exact": poly.reference_exact,
        "quad": beta_interval_quad(spec, eps),
        "normal": poly.reference_normal,
        "poly": poly.value,
        "poly_leading_factor": poly.leading_factor,
        "poly_out_of_validity": poly.out_of_validity,
    }


# ---------------------------------------------------------------------------
# perturbation simulator


def perturbation_lipschitz(spec: BetaSpec) -> float:
    """The closing-form constant L = (2/(sqrt(2 pi) sigma))(1 - (0.5-mu)^2/(3 sigma^2))."""
    mu, sigma = spec.mu, spec.sigma
    return (2.0 / (math.sqrt(2.0 * math.pi) * sigma)) * (
        1.0 - (0.5 - mu) ** 2 / (3.0 * sigma * sigma)
    )


def perturbation_identity_max_error(spec: BetaSpec, n_classifiers: int, instances: int,
                                    k: int, delta: float, seed: int) -> float:
    """Max deviation from |f' - f| = |h_k' - h_k| / N over sampled instances.

    Classifier probabilities are drawn from Be(alpha, beta); classifier k is
    shifted by delta and clipped to [0, 1]; the identity is evaluated against
    the realized (post-clip) shift. The result is floating-point noise only,
    a few 1e-16 in practice.
    """
    _check_perturbation_args(n_classifiers, k, delta)
    if instances < 1:
        raise PreconditionError(f"instances must be >= 1, got {instances}")
    rng = np.random.default_rng(derive_seed(seed, "perturbation:identity"))
    h = rng.beta(spec.alpha, spec.beta, size=(instances, n_classifiers))
    f = h.mean(axis=1)
    h_pert = h.copy()
    h_pert[:, k] = np.minimum(1.0, h_pert[:, k] + delta)
    f_pert = h_pert.mean(axis=1)
    realized = np.abs(h_pert[:, k] - h[:, k])
    return float(np.max(np.abs(np.abs(f_pert - f) - realized / n_classifiers)))


def _check_perturbation_args(n_classifiers: int, k: int, delta: float) -> None:
    if n_classifiers < 1:
        raise PreconditionError(f"need at least one classifier, got {n_classifiers}")
    if not 0 <= k < n_classifiers:
        raise PreconditionError(f"classifier index {k} out of range for N={n_classifiers}")
    if not 0.0 <= delta <= 1.0:
        raise PreconditionError(f"delta must lie in [0, 1], got {delta}")


def ensemble_perturbation(spec: BetaSpec, n_classifiers: int, num_instances: int,
                          k: int, delta: float, seed: int, trials: int) -> dict:
    """Simulated decision-flip fractions against the L * delta / N bound.

    Per trial, per-instance ensemble means are drawn from Be(alpha, beta) and
    classifier k is shifted by +delta and by -delta (the two flip directions
    are reported separately): an up-flip crosses 0.5 from below under the
    +delta shift, a down-flip from above under -delta. Each direction's flip
    fraction equals the observed |accuracy change| for that shift. The
    expected one-direction fraction is half the two-sided bound, reported as
    predicted_flip_fraction.
    """
    _check_perturbation_args(n_classifiers, k, delta)
    if num_instances < 1:
        raise PreconditionError(f"num_instances must be >= 1, got {num_instances}")
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    eps = delta / n_classifiers
    lipschitz_l = perturbation_lipschitz(spec)
    bound = lipschitz_l * eps
    up_fracs = []
    down_fracs = []
    exceed_count = 0
    for t in range(trials):
        rng = np.random.default_rng(derive_seed(seed, f"perturbation:{t}"))
        f = rng.beta(spec.alpha, spec.beta, size=num_instances)
        up = float(np.count_nonzero((f > 0.5 - eps) & (f <= 0.5)) / num_instances)
        down = float(np.count_nonzero((f > 0.5) & (f <= 0.5 + eps)) / num_instances)
        up_fracs.append(up)
        down_fracs.append(down)
        if up > bound or down > bound:
            exceed_count += 1
    identity_instances = min(num_instances, 10_000)
    identity_err = perturbation_identity_max_error(
        spec, n_classifiers, identity_instances, k, delta, seed
    )
    return {
        "alpha": spec.alpha,
        "beta": spec.beta,
        "n_classifiers": n_classifiers,
        "num_instances": num_instances,
        "k": k,
        "delta": delta,
        "trials": trials,
        "seed": seed,
        "epsilon": eps,
        "lipschitz_l": lipschitz_l,
        "bound": bound,
        "predicted_flip_fraction": 0.5 * bound,
        "up_flips": {
            "mean": math.fsum(up_fracs) / trials,
            "max": max(up_fracs),
        },
        "down_flips": {
            "mean": math.fsum(down_fracs) / trials,
            "max": max(down_fracs),
        },
        "exceed_count": exceed_count,
        "identity_instances": identity_instances,
        "identity_max_abs_err": identity_err,
    }
