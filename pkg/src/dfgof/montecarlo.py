"""Multinomial simulation studies of how distribution free the statistics are.

Replicate ``i`` of model ``k`` always draws from the stream seeded with
``(seed, k, i)``, so results do not depend on how replicates are split
across workers.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .exceptions import DegenerateModel, SmallCellWarning
from .parametric import ParametricFamily, mle_fit
from .statistics import STAT_FUNCS, canonical_name
from .transforms import (
    AnchorPair,
    DiscreteModel,
    SampleCounts,
    _residuals,
    components_y_hat,
    parametric_bundle,
    rotate_onto,
    transform_parametric,
)

#: Seed of the frozen random-spacings model used by the ``paper-fig1`` preset.
FIG1_SPACINGS_SEED = 20131017
MIN_CELL_PROB = 1e-12


def replicate_stream(seed: int, model_index: int, replicate: int) -> np.random.Generator:
    """Independent generator for one replicate, derived from its coordinates only."""
    return np.random.default_rng((seed, model_index, replicate))


def sample_multinomial(model, n: int, stream: np.random.Generator) -> SampleCounts:
    """Draw cell counts of a sample of size ``n`` (sequential conditional binomials)."""
    model = model if isinstance(model, DiscreteModel) else DiscreteModel(model)
    if n < 1:
        raise ValueError(f"sample size must be positive, got {n}")
    return SampleCounts(stream.multinomial(n, model.probs))


def make_study_models(kind, params=(), m=10, seed=FIG1_SPACINGS_SEED) -> DiscreteModel:
    """Build one of the study's hypothetical distributions.

    ``random_spacings`` uses the spacings of ``m - 1`` sorted uniforms drawn
    from ``seed``. ``beta_increments`` with ``params = (a, b)`` uses
    ``F(i/m) - F((i-1)/m)`` for the Beta(a, b) distribution function.
    """
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    if kind == "random_spacings":
        u = np.sort(np.random.default_rng(seed).uniform(size=m - 1))
        probs = np.diff(np.concatenate([[0.0], u, [1.0]]))
    elif kind == "beta_increments":
        a, b = params
        if a <= 0 or b <= 0:
            raise ValueError(f"beta parameters must be positive, got {(a, b)}")
        cdf = betainc(a, b, np.arange(m + 1) / m)
        probs = np.diff(cdf)
    else:
        raise ValueError(f"unknown model kind {kind!r}")
    if probs.min() < MIN_CELL_PROB:
        raise DegenerateModel(f"{kind} model has a cell of probability {probs.min():.3e}")
    return DiscreteModel(probs / probs.sum())


@dataclass(frozen=True)
class StudyConfig:
    models: tuple
    n: int
    B: int
    statistic: str = "ks_z"
    anchor: str = "diagonal"
    seed: int = 0
    n_jobs: int = 1
    labels: tuple = ()
    recipes: tuple = ()

    def __post_init__(self):
        models = tuple(m if isinstance(m, DiscreteModel) else DiscreteModel(m) for m in self.models)
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "statistic", canonical_name(self.statistic))
        if not models:
            raise ValueError("a study needs at least one model")
        if len({m.m for m in models}) != 1:
            raise ValueError("all study models must have the same number of cells")
        if self.B < 100:
            raise ValueError(f"studies need B >= 100, got {self.B}")
        if self.n < 1 or self.seed < 0 or self.n_jobs < 1:
            raise ValueError("n and n_jobs must be positive and seed nonnegative")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"model{k + 1}" for k in range(len(models))))

    @property
    def m(self) -> int:
        return self.models[0].m


def paper_fig1_config(seed=42, B=10_000, statistic="ks_z", n_jobs=1) -> StudyConfig:
    """Three models on 10 cells, samples of size 200, diagonal anchor."""
    recipes = (
        ("random_spacings", (), FIG1_SPACINGS_SEED),
        ("beta_increments", (3.0, 3.0), None),
        ("beta_increments", (0.8, 1.5), None),
    )
    models = tuple(make_study_models(kind, params, 10, s) for kind, params, s in recipes)
    return StudyConfig(
        models=models,
        n=200,
        B=B,
        statistic=statistic,
        anchor="diagonal",
        seed=seed,
        n_jobs=n_jobs,
        labels=("random_spacings", "beta_3_3", "beta_0.8_1.5"),
        recipes=recipes,
    )


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous step function of a sample."""

    values: np.ndarray
    label: str = ""
    B: int = field(init=False)

    def __post_init__(self):
        vals = np.sort(np.asarray(self.values, dtype=float))
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "B", vals.size)

    def __call__(self, x):
        return np.searchsorted(self.values, x, side="right") / self.B

    def curve(self):
        """Distinct jump points and the CDF value at each."""
        x = np.unique(self.values)
        return x, self(x)


def cdf_sup_distance(a: EmpiricalCdf, b: EmpiricalCdf) -> float:
    """``sup_x |F_a(x) - F_b(x)|``, attained at a jump of either function."""
    pooled = np.concatenate([a.values, b.values])
    return float(np.max(np.abs(a(pooled) - b(pooled))))


def _chunk_statistics(config, k, start, stop):
    model = config.models[k]
    m = model.m
    counts = np.empty((stop - start, m), dtype=float)
    for j, i in enumerate(range(start, stop)):
        counts[j] = replicate_stream(config.seed, k, i).multinomial(config.n, model.probs)
    y = _residuals(counts, model.probs)
    if config.statistic.endswith("_y"):
        comp = y
    else:
        anchor = AnchorPair.preset_for(config.anchor, m)
        e1 = config.anchor == "e1"
        comp = rotate_onto(y, model.sqrt, anchor.r, zero_first=e1)
    return STAT_FUNCS[config.statistic](comp)


#: Replicates per work unit. Fixed so that batched arithmetic (and hence the
#: last bit of every statistic) does not depend on the number of workers.
CHUNK_SIZE = 512


def _chunks(B):
    return [(s, min(B, s + CHUNK_SIZE)) for s in range(0, B, CHUNK_SIZE)]


def simulate_statistics(config: StudyConfig) -> np.ndarray:
    """Statistic values, shape ``(n_models, B)``, in replicate order."""
    out = np.empty((len(config.models), config.B))
    tasks = [(k, s, e) for k in range(len(config.models)) for s, e in _chunks(config.B)]
    if config.n_jobs == 1:
        results = [_chunk_statistics(config, *t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            results = list(pool.map(lambda t: _chunk_statistics(config, *t), tasks))
    for (k, s, e), vals in zip(tasks, results):
        out[k, s:e] = vals
    return out


def run_null_study(config: StudyConfig) -> list:
    """Empirical CDF of the study statistic under each model."""
    stats = simulate_statistics(config)
    return [EmpiricalCdf(row, label) for row, label in zip(stats, config.labels)]


def pairwise_distances(cdfs) -> dict:
    out = {}
    for i in range(len(cdfs)):
        for j in range(i + 1, len(cdfs)):
            out[(cdfs[i].label, cdfs[j].label)] = cdf_sup_distance(cdfs[i], cdfs[j])
    return out


def covariance_check(
    model,
    anchor="diagonal",
    n=20_000,
    B=20_000,
    seed=0,
    family: ParametricFamily | None = None,
    basis="gram_schmidt",
) -> float:
    """Largest entrywise gap between the empirical covariance of ``Z`` and its limit.

    Without ``family`` the limit is ``I - r r^T``. With ``family`` each
    replicate is refitted, rotated with the estimated-parameter transform,
    and compared with ``I - r r^T - rhat rhat^T``; ``model`` is then the
    distribution samples are drawn from.
    """
    model = model if isinstance(model, DiscreteModel) else DiscreteModel(model)
    m = model.m
    if isinstance(anchor, str):
        anchor = AnchorPair.preset_for(anchor, m)
    if family is not None:
        anchor = anchor.with_score_anchor()
    if np.min(n * model.probs) < 10:
        warnings.warn(
            f"smallest expected count n p_i = {np.min(n * model.probs):.2f} is below 10",
            SmallCellWarning,
            stacklevel=2,
        )
    counts = np.empty((B, m), dtype=float)
    for i in range(B):
        counts[i] = replicate_stream(seed, 0, i).multinomial(n, model.probs)

    if family is None:
        z = rotate_onto(_residuals(counts, model.probs), model.sqrt, anchor.r)
        target = np.eye(m) - np.outer(anchor.r, anchor.r)
    else:
        z = np.empty_like(counts)
        for i in range(B):
            sample = SampleCounts(counts[i].astype(np.int64))
            fit = mle_fit(sample, family)
            yhat = components_y_hat(sample, family, fit.theta)
            bundle = parametric_bundle(family, fit.theta, anchor, basis)
            z[i] = transform_parametric(yhat, bundle, anchor.preset).values
        target = np.eye(m) - np.outer(anchor.r, anchor.r) - np.outer(anchor.rhat, anchor.rhat)
    cov = np.cov(z, rowvar=False)
    return float(np.max(np.abs(cov - target)))
