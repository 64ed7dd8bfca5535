"""One-parameter families of discrete distributions and their maximum-likelihood fit."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DegenerateScore, DimensionMismatch, DomainError, InvalidModel, NoConvergence

SCORE_TOL = 1e-10
FISHER_TOL = 1e-14
BRACKET = (-20.0, 20.0)


@dataclass(frozen=True)
class ParametricFamily:
    """Family ``theta -> p(theta)`` on ``m`` cells with derivative ``dp/dtheta``.

    Parameters
    ----------
    name : str
    m : int
        Number of cells.
    prob_fn : callable
        ``theta -> p(theta)``, an ``(m,)`` array of positive probabilities.
    deriv_fn : callable, optional
        ``theta -> dp/dtheta``. When omitted, central differences with step
        ``1e-6 * max(1, |theta|)`` are used.
    domain : tuple of float
        Open interval of admissible ``theta``.
    """

    name: str
    m: int
    prob_fn: Callable
    deriv_fn: Callable | None = None
    domain: tuple = (-math.inf, math.inf)
    kappa: int = 1

    def contains(self, theta) -> bool:
        lo, hi = self.domain
        return bool(np.isfinite(theta)) and lo < theta < hi

    def _check(self, theta):
        theta = float(theta)
        if not self.contains(theta):
            raise DomainError(f"theta = {theta!r} lies outside {self.domain} for family {self.name!r}")
        return theta

    def probs(self, theta) -> np.ndarray:
        theta = self._check(theta)
        p = np.asarray(self.prob_fn(theta), dtype=float)
        if p.shape != (self.m,):
            raise DimensionMismatch(f"family {self.name!r} returned shape {p.shape}, expected ({self.m},)")
        return p

    def dprobs(self, theta) -> np.ndarray:
        theta = self._check(theta)
        if self.deriv_fn is not None:
            return np.asarray(self.deriv_fn(theta), dtype=float)
        h = 1e-6 * max(1.0, abs(theta))
        return (self.probs(theta + h) - self.probs(theta - h)) / (2.0 * h)

    def validate(self, thetas, rtol=1e-6):
        """Check the family invariants at each probe ``theta``; raise InvalidModel on failure."""
        for theta in thetas:
            p = self.probs(theta)
            if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-10:
                raise InvalidModel(f"p({theta}) is not a positive probability vector")
            dp = self.dprobs(theta)
            if abs(dp.sum()) > 1e-8:
                raise InvalidModel(f"derivative at theta = {theta} does not sum to 0 (got {dp.sum():.3e})")
            if self.deriv_fn is not None:
                fd = _central_difference(self, theta)
                scale = max(float(np.max(np.abs(dp))), 1e-300)
                if np.max(np.abs(fd - dp)) > rtol * scale:
                    raise InvalidModel(f"analytic derivative disagrees with finite differences at theta = {theta}")
        return self


def _central_difference(family, theta):
    h = 1e-5 * max(1.0, abs(theta))
    return (family.probs(theta + h) - family.probs(theta - h)) / (2.0 * h)


def power_law_family(m: int) -> ParametricFamily:
    """Truncated power law ``p_i(theta) = i**-theta / sum_j j**-theta``, ``i = 1..m``.

    ``theta = 0`` is uniform and ``theta = 1`` is Zipf's law on ``m`` cells.
    The derivative is ``p_i (S1 - log i)`` with ``S1 = sum_j p_j log j``.
    """
    if m < 2:
        raise ValueError(f"power-law family needs m >= 2, got {m}")
    logi = np.log(np.arange(1, m + 1, dtype=float))

    def prob_fn(theta):
        w = -theta * logi
        w -= w.max()
        p = np.exp(w)
        return p / p.sum()

    def deriv_fn(theta):
        p = prob_fn(theta)
        return p * (math.fsum(p * logi) - logi)

    return ParametricFamily("power_law", m, prob_fn, deriv_fn)


def tabulated_family(name, m, prob_fn, deriv_fn=None, domain=(-math.inf, math.inf), probes=None):
    """Wrap a user-supplied ``p(theta)`` as a validated family.

    ``probes`` defaults to a few points inside ``domain``.
    """
    family = ParametricFamily(name, m, prob_fn, deriv_fn, tuple(domain))
    if probes is None:
        lo, hi = domain
        lo = max(lo, -2.0)
        hi = min(hi, 2.0)
        probes = lo + (hi - lo) * np.array([0.25, 0.5, 0.75])
    return family.validate(probes)


FAMILIES = {"power_law": power_law_family}


def family_by_name(name: str, m: int) -> ParametricFamily:
    try:
        return FAMILIES[name](m)
    except KeyError:
        raise ValueError(f"unknown family {name!r}; available: {sorted(FAMILIES)}") from None


def fisher_information(family: ParametricFamily, theta) -> float:
    """Per-observation Fisher information ``sum_i dp_i**2 / p_i``."""
    p = family.probs(theta)
    dp = family.dprobs(theta)
    return math.fsum(dp * dp / p)


def normalized_scores(family: ParametricFamily, theta) -> np.ndarray:
    """Unit vector ``Gamma**-1/2 * dp_i / sqrt(p_i)``, orthogonal to ``sqrt(p)``."""
    p = family.probs(theta)
    dp = family.dprobs(theta)
    gamma = math.fsum(dp * dp / p)
    if gamma <= FISHER_TOL:
        raise DegenerateScore(f"Fisher information {gamma:.3e} at theta = {theta!r} is too small")
    return dp / np.sqrt(p) / math.sqrt(gamma)


def score(family: ParametricFamily, counts, theta) -> float:
    """Derivative of the multinomial log-likelihood, ``sum_i nu_i dp_i / p_i``."""
    counts = np.asarray(counts, dtype=float)
    return math.fsum(counts * family.dprobs(theta) / family.probs(theta))


def log_likelihood(family: ParametricFamily, counts, theta) -> float:
    counts = np.asarray(counts, dtype=float)
    p = family.probs(theta)
    mask = counts > 0
    # an underflowed cell gives -inf, which step halving then rejects
    with np.errstate(divide="ignore"):
        return math.fsum(counts[mask] * np.log(p[mask]))


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    score_residual: float
    iterations: int
    fisher_at_hat: np.ndarray
    converged: bool
    method: str = "newton"
    log_likelihood: float = float("nan")

    @property
    def theta(self) -> float:
        return float(self.theta_hat[0])

    def as_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat.tolist(),
            "score_residual": self.score_residual,
            "iterations": self.iterations,
            "fisher_at_hat": self.fisher_at_hat.tolist(),
            "converged": self.converged,
            "method": self.method,
            "log_likelihood": self.log_likelihood,
        }


def _result(family, counts, theta, iterations, method, tol):
    s = score(family, counts, theta)
    return FitResult(
        theta_hat=np.array([theta]),
        score_residual=s,
        iterations=iterations,
        fisher_at_hat=np.array([[fisher_information(family, theta)]]),
        converged=abs(s) <= tol,
        method=method,
        log_likelihood=log_likelihood(family, counts, theta),
    )


def _newton(family, counts, theta, tol, max_iter):
    n = counts.sum()
    ll = log_likelihood(family, counts, theta)
    for it in range(max_iter + 1):
        s = score(family, counts, theta)
        if abs(s) <= tol:
            return theta, it, True
        if it == max_iter:
            break
        info = n * fisher_information(family, theta)
        if not info > 0:
            break
        step = s / info
        for _ in range(60):
            cand = theta + step
            if family.contains(cand):
                cand_ll = log_likelihood(family, counts, cand)
                if cand_ll >= ll or abs(step) <= 4 * np.spacing(max(1.0, abs(theta))):
                    break
            step *= 0.5
        else:
            break
        if cand == theta:
            break
        theta, ll = cand, cand_ll
    return theta, max_iter, False


def _bisect(family, counts, tol):
    lo = max(BRACKET[0], family.domain[0])
    hi = min(BRACKET[1], family.domain[1])
    grid = np.linspace(lo, hi, 161)
    grid = grid[[family.contains(t) for t in grid]]
    values = np.array([score(family, counts, t) for t in grid])
    sign_change = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) <= 0)
    if sign_change.size == 0:
        raise DomainError(f"score has no sign change on [{grid[0]:g}, {grid[-1]:g}]")
    a, b = grid[sign_change[0]], grid[sign_change[0] + 1]
    sa = values[sign_change[0]]
    it = 0
    while True:
        mid = 0.5 * (a + b)
        sm = score(family, counts, mid)
        it += 1
        if abs(sm) <= tol or mid in (a, b):
            return mid, it
        if np.sign(sm) == np.sign(sa):
            a, sa = mid, sm
        else:
            b = mid


def mle_fit(sample, family: ParametricFamily, init=None, tol=SCORE_TOL, max_iter=100) -> FitResult:
    """Maximum-likelihood estimate of ``theta`` from multinomial counts.

    Solves ``sum_i nu_i dp_i(theta) / p_i(theta) = 0`` by Newton's method
    (Fisher scoring) with step halving on the log-likelihood, starting at
    ``init`` (default 0). If that fails within ``max_iter`` steps, or ends
    outside [-20, 20], the root is bracketed on a grid over [-20, 20] and
    bisected.

    Raises
    ------
    DomainError
        No sign change of the score on the bracket (e.g. all mass in one
        extreme cell, where the estimate diverges).
    NoConvergence
        Bisection stalled above ``tol``; ``report`` carries the last state.
    """
    counts = np.asarray(getattr(sample, "counts", sample), dtype=float)
    if counts.shape != (family.m,):
        raise DimensionMismatch(f"family has {family.m} cells, sample has shape {counts.shape}")
    if family.kappa != 1:
        raise NotImplementedError("only one-parameter families can be fitted")
    theta0 = 0.0 if init is None else float(init)
    if not family.contains(theta0):
        lo, hi = family.domain
        theta0 = 0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else (lo + 1.0 if np.isfinite(lo) else hi - 1.0)
    ll0 = log_likelihood(family, counts, theta0)

    theta, iterations, ok = _newton(family, counts, theta0, tol, max_iter)
    method = "newton"
    # a tiny score far outside the bracket is the asymptote of a divergent estimate
    outside = not BRACKET[0] <= theta <= BRACKET[1]
    if not ok or outside or log_likelihood(family, counts, theta) < ll0:
        theta, extra = _bisect(family, counts, tol)
        iterations += extra
        method = "bisection"
    result = _result(family, counts, theta, iterations, method, tol)
    if not result.converged:
        raise NoConvergence(
            f"score residual {result.score_residual:.3e} exceeds {tol:g} after {iterations} iterations",
            report=result.as_dict(),
        )
    return result
