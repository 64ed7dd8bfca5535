"""Partial-sum statistics, Monte Carlo null tables and p-values."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from . import __version__
from .exceptions import DimensionMismatch, ProvenanceMismatch
from .transforms import AnchorPair, ComponentVector, DiscreteModel

STATISTICS = ("ks_z", "ks_y", "cvm_z", "cvm_y", "pearson_chi2")
ALIASES = {"chi2": "pearson_chi2"}
TABLE_FORMAT_VERSION = 1
CACHE_ENV = "DFGOF_TABLE_CACHE"

_RAW_KINDS = ("raw_y", "parametric_yhat")


def canonical_name(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in STATISTICS:
        raise ValueError(f"unknown statistic {name!r}; expected one of {STATISTICS + tuple(ALIASES)}")
    return name


def ks_values(v):
    """``max_k |S_k|`` along the last axis."""
    return np.max(np.abs(np.cumsum(v, axis=-1)), axis=-1)


def cvm_values(v):
    """``mean_k S_k**2`` along the last axis."""
    return np.mean(np.cumsum(v, axis=-1) ** 2, axis=-1)


def chi2_values(v):
    return np.sum(np.square(v), axis=-1)


STAT_FUNCS = {
    "ks_z": ks_values,
    "ks_y": ks_values,
    "cvm_z": cvm_values,
    "cvm_y": cvm_values,
    "pearson_chi2": chi2_values,
}


@dataclass(frozen=True)
class StatisticValue:
    name: str
    value: float
    m: int
    n: int | None = None
    anchor: str | None = None
    anchor_hash: str | None = None
    model_hash: str | None = None

    def as_dict(self) -> dict:
        return {
            "statistic": self.name,
            "value": self.value,
            "m": self.m,
            "n": self.n,
            "anchor": self.anchor,
            "anchor_hash": self.anchor_hash,
            "model_hash": self.model_hash,
        }


def _values(v):
    if isinstance(v, ComponentVector):
        return v.values, v.kind, v.provenance
    return np.asarray(v, dtype=float), None, {}


def partial_sums(v) -> ComponentVector:
    """Cumulative sums ``S_k = v_1 + ... + v_k``, ``k = 1..m``."""
    values, _, prov = _values(v)
    return ComponentVector(np.cumsum(values), "partial_sums", prov)


def _stat(v, family):
    values, kind, prov = _values(v)
    if kind == "partial_sums":
        raise ValueError("pass the component vector, not its partial sums")
    suffix = "y" if kind in _RAW_KINDS else "z"
    name = "pearson_chi2" if family == "pearson_chi2" else f"{family}_{suffix}"
    return StatisticValue(
        name=name,
        value=float(STAT_FUNCS[name](values)),
        m=values.size,
        n=prov.get("n"),
        anchor=prov.get("anchor"),
        anchor_hash=prov.get("anchor_hash"),
        model_hash=prov.get("model_hash"),
    )


def ks_stat(v) -> StatisticValue:
    """Discrete Kolmogorov-Smirnov statistic ``max_k |S_k|``.

    Named ``ks_y`` for raw components and ``ks_z`` for rotated ones.
    """
    return _stat(v, "ks")


def cvm_stat(v) -> StatisticValue:
    """Cramer-von Mises analogue with uniform weights, ``(1/m) sum_k S_k**2``."""
    return _stat(v, "cvm")


def pearson_chi2(v) -> StatisticValue:
    """Sum of squared components; unchanged by every rotation in this package."""
    return _stat(v, "pearson_chi2")


@dataclass(frozen=True)
class NullTable:
    """Sorted Monte Carlo draws of a statistic under its limiting null law."""

    statistic: str
    m: int
    anchor: str
    anchor_hash: str
    B: int
    seed: int
    values: np.ndarray
    params: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    def header(self) -> dict:
        return {
            "format_version": TABLE_FORMAT_VERSION,
            "tool_version": __version__,
            "statistic": self.statistic,
            "m": self.m,
            "anchor": self.anchor,
            "anchor_hash": self.anchor_hash,
            "B": self.B,
            "seed": self.seed,
            **dict(self.params),
        }

    def quantile(self, level):
        return np.quantile(self.values, level)


def _limit_draws(stat, m, anchor, B, rng, model):
    x = rng.standard_normal((B, m))
    if stat.endswith("_y"):
        q = model.sqrt
        return x - np.outer(x @ q, q)
    x = x - np.outer(x @ anchor.r, anchor.r)
    if anchor.rhat is not None:
        x = x - np.outer(x @ anchor.rhat, anchor.rhat)
    return x


def _cache_path(cache_dir, stat, m, anchor, B, seed, model_hash):
    key = f"{stat}_m{m}_{anchor.preset}-{anchor.hash}_B{B}_seed{seed}"
    if model_hash:
        key += f"_model-{model_hash}"
    return Path(cache_dir) / f"{key}.csv"


def null_table(stat, m, anchor="diagonal", B=10_000, seed=0, model=None, cache_dir=None) -> NullTable:
    """Simulate ``B`` draws of ``stat`` under the limit law of the rotated components.

    For rotated statistics the law is ``X - <X,r>r`` (minus ``<X,rhat>rhat``
    when the anchor carries ``rhat``), with ``X`` standard normal in ``R^m``;
    it does not depend on the hypothesized model. ``ks_y``/``cvm_y`` need
    ``model`` and use ``X - <X,sqrt(p)>sqrt(p)`` instead.

    Tables are cached under ``cache_dir`` (default: ``$DFGOF_TABLE_CACHE``,
    no caching when unset), keyed by statistic, m, anchor, B and seed.
    """
    stat = canonical_name(stat)
    if B < 1000:
        raise ValueError(f"null tables need B >= 1000, got {B}")
    if isinstance(anchor, str):
        anchor = AnchorPair.preset_for(anchor, m)
    if anchor.m != m:
        raise DimensionMismatch(f"anchor has dimension {anchor.m}, expected {m}")
    model_hash = None
    if stat.endswith("_y"):
        if model is None:
            raise ValueError(f"{stat} is not distribution free; a model is required for its table")
        model = model if isinstance(model, DiscreteModel) else DiscreteModel(model)
        model_hash = model.hash
    cache_dir = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV)
    path = _cache_path(cache_dir, stat, m, anchor, B, seed, model_hash) if cache_dir else None
    if path is not None and path.exists():
        return read_table(path)

    rng = np.random.default_rng(seed)
    draws = _limit_draws(stat, m, anchor, B, rng, model)
    values = np.sort(STAT_FUNCS[stat](draws))
    params = {"law": "sqrt_p_projection" if model_hash else "anchor_projection"}
    if model_hash:
        params["model_hash"] = model_hash
    if stat == "pearson_chi2":
        params["dof"] = m - 1 - (anchor.rhat is not None)
    table = NullTable(stat, m, anchor.preset, anchor.hash, B, seed, values, params)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        write_table(table, path)
    return table


def write_table(table: NullTable, path):
    """Write a table as one JSON header line followed by one value per line."""
    lines = [json.dumps(table.header(), sort_keys=True), "value"]
    lines.extend(repr(float(v)) for v in table.values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_table(path) -> NullTable:
    text = Path(path).read_text().splitlines()
    header = json.loads(text[0])
    if header.get("format_version") != TABLE_FORMAT_VERSION:
        raise ValueError(f"unsupported null-table format {header.get('format_version')!r}")
    values = np.array([float(x) for x in text[2:]])
    core = ("format_version", "tool_version", "statistic", "m", "anchor", "anchor_hash", "B", "seed")
    params = {k: v for k, v in header.items() if k not in core}
    return NullTable(
        header["statistic"], header["m"], header["anchor"], header["anchor_hash"],
        header["B"], header["seed"], values, params,
    )


def p_value(observed: StatisticValue, table: NullTable) -> float:
    """Monte Carlo p-value ``(1 + #{T >= observed}) / (B + 1)``."""
    if observed.name != table.statistic:
        raise ProvenanceMismatch(f"statistic {observed.name!r} tested against a {table.statistic!r} table")
    if observed.m != table.m:
        raise ProvenanceMismatch(f"m = {observed.m} tested against a table for m = {table.m}")
    if observed.name.endswith("_y"):
        if observed.model_hash != table.params.get("model_hash"):
            raise ProvenanceMismatch("raw-component statistic tested against a table for another model")
    elif observed.anchor_hash is not None and observed.anchor_hash != table.anchor_hash:
        raise ProvenanceMismatch(f"anchor {observed.anchor!r} tested against a table for {table.anchor!r}")
    exceed = table.values.size - np.searchsorted(table.values, observed.value, side="left")
    return float((1 + exceed) / (table.values.size + 1))
