"""Chi-square components and their distribution-free rotations.

The raw components ``Y_i = (nu_i - n p_i) / sqrt(n p_i)`` are always
orthogonal to ``sqrt(p)``. Rotating ``sqrt(p)`` onto a fixed anchor ``r``
gives a vector ``Z`` orthogonal to ``r`` whose limit law no longer depends
on ``p``. With an estimated parameter the score direction ``qhat`` is
rotated onto a second anchor ``rhat`` as well.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from types import MappingProxyType

import numpy as np

from ._validation import (
    array_hash,
    check_counts,
    check_probabilities,
    check_same_dim,
    check_unit_vector,
)
from .exceptions import (
    ConditioningWarning,
    DimensionMismatch,
    DomainError,
    EmptyPooledCell,
    InvalidModel,
    ProvenanceMismatch,
)
from .rotations import (
    ORTHOGONALITY_TOL,
    GeometryBundle,
    build_bases,
    build_rotation_4d,
    recursive_rotation,
)

KINDS = ("raw_y", "transformed_z", "parametric_yhat", "parametric_zhat", "partial_sums")
PRESETS = ("diagonal", "e1", "e1_e2", "plateau", "custom")

#: ``1 - <q, r>`` below this raises a ConditioningWarning.
CONDITIONING_TOL = 1e-8
#: ``||q - r||`` at or below this means no rotation at all.
IDENTITY_TOL = 1e-12


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DiscreteModel:
    """Hypothetical cell probabilities ``p_1..p_m``, all positive, summing to 1."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _frozen(check_probabilities(self.probs)))

    @property
    def m(self) -> int:
        return self.probs.size

    @property
    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.probs)

    @property
    def hash(self) -> str:
        return array_hash(self.probs)


@dataclass(frozen=True)
class SampleCounts:
    """Observed cell frequencies; zero counts are allowed."""

    counts: np.ndarray

    def __post_init__(self):
        c = check_counts(self.counts)
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def m(self) -> int:
        return self.counts.size


@dataclass(frozen=True)
class AnchorPair:
    """Standard unit vector ``r`` (and optionally ``rhat``) the model is rotated onto."""

    r: np.ndarray
    rhat: np.ndarray | None = None
    preset: str = "custom"

    def __post_init__(self):
        r = check_unit_vector(self.r, "r")
        object.__setattr__(self, "r", _frozen(r))
        if self.rhat is not None:
            rhat = check_unit_vector(self.rhat, "rhat")
            check_same_dim(r, rhat, names=("r", "rhat"))
            if abs(float(r @ rhat)) > 1e-10:
                raise ValueError(f"<r, rhat> = {float(r @ rhat):.3e}; anchors must be orthogonal")
            object.__setattr__(self, "rhat", _frozen(rhat))
        if self.preset not in PRESETS:
            raise ValueError(f"unknown anchor preset {self.preset!r}; expected one of {PRESETS}")

    @property
    def m(self) -> int:
        return self.r.size

    @property
    def hash(self) -> str:
        if self.rhat is None:
            return array_hash(self.r)
        return array_hash(self.r, self.rhat)

    @classmethod
    def preset_for(cls, name: str, m: int) -> "AnchorPair":
        """Build one of the named anchors for dimension ``m``.

        ``diagonal`` has all coordinates ``1/sqrt(m)``; ``e1`` is the first
        standard basis vector; ``e1_e2`` adds the second one as ``rhat``;
        ``plateau`` pairs the diagonal with ``(1,..,1,-1,..,-1)`` normalized,
        where the last coordinate is 0 for odd ``m``.
        """
        if m < 2:
            raise DimensionMismatch(f"anchors need m >= 2, got {m}")
        if name == "diagonal":
            return cls(np.full(m, 1.0 / np.sqrt(m)), None, "diagonal")
        if name == "e1":
            return cls(np.eye(m)[0], None, "e1")
        if name == "e1_e2":
            eye = np.eye(m)
            return cls(eye[0], eye[1], "e1_e2")
        if name == "plateau":
            k = m - (m % 2)
            rhat = np.zeros(m)
            rhat[: k // 2] = 1.0
            rhat[k // 2 : k] = -1.0
            return cls(np.full(m, 1.0 / np.sqrt(m)), rhat / np.sqrt(k), "plateau")
        raise ValueError(f"unknown anchor preset {name!r}")

    def with_score_anchor(self) -> "AnchorPair":
        """Return an anchor with ``rhat`` set, upgrading ``diagonal`` and ``e1``."""
        if self.rhat is not None:
            return self
        if self.preset == "diagonal":
            return AnchorPair.preset_for("plateau", self.m)
        if self.preset == "e1":
            return AnchorPair.preset_for("e1_e2", self.m)
        raise ValueError("a custom anchor used with an estimated parameter must supply rhat")


@dataclass(frozen=True)
class ComponentVector:
    """Vector in component space, tagged with its kind and provenance.

    ``provenance`` always holds ``model_hash`` and, for rotated kinds,
    ``anchor`` (preset name) and ``anchor_hash``.
    """

    values: np.ndarray
    kind: str
    provenance: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown component kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "provenance", MappingProxyType(dict(self.provenance)))

    @property
    def m(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return self.values.size


def _coerce_model(model):
    return model if isinstance(model, DiscreteModel) else DiscreteModel(model)


def _coerce_counts(sample):
    return sample if isinstance(sample, SampleCounts) else SampleCounts(sample)


def _residuals(counts, probs):
    n = counts.sum(axis=-1, keepdims=True)
    expected = n * probs
    return (counts - expected) / np.sqrt(expected)


def components_y(sample, model) -> ComponentVector:
    """Pearson components ``(nu_i - n p_i) / sqrt(n p_i)``.

    Examples
    --------
    >>> y = components_y([12, 4, 4], [0.5, 0.25, 0.25])
    >>> np.round(y.values, 5)
    array([ 0.63246, -0.44721, -0.44721])
    """
    sample = _coerce_counts(sample)
    model = _coerce_model(model)
    check_same_dim(sample.counts, model.probs, names=("counts", "probs"))
    y = _residuals(sample.counts.astype(float), model.probs)
    return ComponentVector(y, "raw_y", {"model_hash": model.hash, "n": sample.n})


def rotate_onto(y, q, r, *, zero_first=False):
    """Apply ``Y - <Y, r> (r - q) / (1 - <q, r>)`` along the last axis of ``y``.

    ``y`` is assumed orthogonal to ``q``; under that assumption this is the
    orthogonal operator carrying ``q`` to ``r``, restricted to ``q``'s
    orthocomplement. Nothing is done when ``||q - r|| <= 1e-12``.
    ``zero_first`` pins the first output coordinate to exactly 0 (for the
    ``e1`` anchor, where it is 0 up to rounding anyway).
    """
    y = np.asarray(y, dtype=float)
    v = r - q
    vv = float(v @ v)
    if np.sqrt(vv) <= IDENTITY_TOL:
        return y.copy()
    # 1 - <q, r> = ||r - q||^2 / 2 without the cancellation.
    gap = 0.5 * vv
    if gap < CONDITIONING_TOL:
        warnings.warn(
            f"1 - <q, r> = {gap:.3e} is below {CONDITIONING_TOL:g}; results are ill-conditioned",
            ConditioningWarning,
            stacklevel=3,
        )
    z = y - np.multiply.outer(y @ r / gap, v)
    if zero_first:
        z[..., 0] = 0.0
    return z


def unrotate(z, q, r):
    """Inverse of :func:`rotate_onto`: the reflection swapping ``q`` and ``r``."""
    z = np.asarray(z, dtype=float)
    v = r - q
    vv = float(v @ v)
    if np.sqrt(vv) <= IDENTITY_TOL:
        return z.copy()
    return z - np.multiply.outer(z @ v * (2.0 / vv), v)


def _is_e1(anchor):
    return anchor.r[0] == 1.0 and not np.any(anchor.r[1:])


def _check_anchor(anchor, m, simple=True):
    if isinstance(anchor, str):
        anchor = AnchorPair.preset_for(anchor, m)
    if anchor.m != m:
        raise DimensionMismatch(f"anchor has dimension {anchor.m}, components have {m}")
    if simple and anchor.rhat is not None:
        raise ValueError(f"anchor {anchor.preset!r} carries rhat; use the parametric transform")
    return anchor


def _gap_flag(q, r):
    return bool(0.5 * float((r - q) @ (r - q)) < CONDITIONING_TOL and np.linalg.norm(r - q) > IDENTITY_TOL)


def transform_simple(y: ComponentVector, model, anchor="diagonal") -> ComponentVector:
    """Rotate raw components so their limit law is ``X - <X, r> r``.

    Parameters
    ----------
    y : ComponentVector
        Output of :func:`components_y` for the same model.
    model : DiscreteModel or array_like
        Hypothetical probabilities ``p``; ``q = sqrt(p)``.
    anchor : AnchorPair or str
        Target direction ``r``. Must not carry ``rhat``.

    Returns
    -------
    ComponentVector
        ``Z = Y - <Y, r> (r - q) / (1 - <q, r>)``, of kind ``transformed_z``,
        with ``<Z, r> = 0`` and ``||Z|| = ||Y||``.
    """
    model = _coerce_model(model)
    if y.kind != "raw_y":
        raise ValueError(f"expected raw_y components, got {y.kind!r}")
    if y.provenance.get("model_hash") not in (None, model.hash):
        raise ProvenanceMismatch("components were computed under a different model")
    if y.provenance.get("two_sample"):
        raise ValueError("two-sample components go through transform_two_sample")
    check_same_dim(y.values, model.probs, names=("components", "probs"))
    anchor = _check_anchor(anchor, model.m)
    q = model.sqrt
    z = rotate_onto(y.values, q, anchor.r, zero_first=_is_e1(anchor))
    prov = dict(y.provenance)
    prov.update(
        model_hash=model.hash,
        anchor=anchor.preset,
        anchor_hash=anchor.hash,
        ill_conditioned=_gap_flag(q, anchor.r),
    )
    return ComponentVector(z, "transformed_z", prov)


def inverse_transform(z: ComponentVector, model, anchor="diagonal") -> ComponentVector:
    """Recover the raw components from the output of a simple or two-sample transform."""
    model = _coerce_model(model)
    if z.kind != "transformed_z":
        raise ValueError(f"expected transformed_z components, got {z.kind!r}")
    anchor = _check_anchor(anchor, model.m)
    if z.provenance.get("model_hash") != model.hash:
        raise ProvenanceMismatch("transformed vector was built under a different model")
    if z.provenance.get("anchor_hash") != anchor.hash:
        raise ProvenanceMismatch("transformed vector was built with a different anchor")
    q = model.sqrt
    if z.provenance.get("two_sample"):
        q = -q
    y = unrotate(z.values, q, anchor.r)
    prov = {k: v for k, v in z.provenance.items() if k not in ("anchor", "anchor_hash", "ill_conditioned")}
    return ComponentVector(y, "raw_y", prov)


def two_sample_components(s1, s2):
    """Components of the two-sample chi-square statistic for the first sample.

    Returns
    -------
    y : ComponentVector
        ``(nu1_i - n1 mu_i / n) / sqrt(n1 mu_i / n)`` with ``mu = nu1 + nu2``
        and ``n = n1 + n2``.
    pooled : DiscreteModel
        Pooled proportions ``mu / n``.

    Raises
    ------
    EmptyPooledCell
        If a cell is empty in both samples; merge cells first.
    """
    s1 = _coerce_counts(s1)
    s2 = _coerce_counts(s2)
    check_same_dim(s1.counts, s2.counts, names=("first sample", "second sample"))
    pooled_counts = s1.counts + s2.counts
    if np.any(pooled_counts == 0):
        empty = (np.flatnonzero(pooled_counts == 0) + 1).tolist()
        raise EmptyPooledCell(f"cells {empty} are empty in both samples")
    n = int(pooled_counts.sum())
    pooled = DiscreteModel(pooled_counts / n)
    n1 = s1.n
    expected = n1 * pooled_counts / n
    y = (s1.counts - expected) / np.sqrt(expected)
    prov = {"model_hash": pooled.hash, "n": n1, "n2": s2.n, "two_sample": True}
    return ComponentVector(y, "raw_y", prov), pooled


def transform_two_sample(y2: ComponentVector, pooled, anchor="diagonal") -> ComponentVector:
    """Distribution-free rotation of two-sample components.

    The first-sample components are orthogonal to ``q = sqrt(mu / n)``; the
    rotation carries ``-q`` onto ``r``, giving
    ``Z = Y - <Y, r> (r + q) / (1 + <q, r>)``. The denominator is at least 1,
    so this never degenerates.
    """
    pooled = _coerce_model(pooled)
    if y2.kind != "raw_y" or not y2.provenance.get("two_sample"):
        raise ValueError("expected components from two_sample_components")
    if y2.provenance.get("model_hash") != pooled.hash:
        raise ProvenanceMismatch("components were pooled under a different model")
    anchor = _check_anchor(anchor, pooled.m)
    q = -pooled.sqrt
    z = rotate_onto(y2.values, q, anchor.r, zero_first=_is_e1(anchor))
    prov = dict(y2.provenance)
    prov.update(anchor=anchor.preset, anchor_hash=anchor.hash, ill_conditioned=False)
    return ComponentVector(z, "transformed_z", prov)


def components_y_hat(sample, family, theta_hat) -> ComponentVector:
    """Pearson components under the fitted probabilities ``p(theta_hat)``."""
    sample = _coerce_counts(sample)
    if family.m != sample.m:
        raise DimensionMismatch(f"family has {family.m} cells, sample has {sample.m}")
    theta = float(np.asarray(theta_hat, dtype=float).reshape(-1)[0])
    if not family.contains(theta):
        raise DomainError(f"theta = {theta!r} lies outside {family.domain}")
    p = family.probs(theta)
    if np.any(p <= 0):
        raise InvalidModel(f"family {family.name!r} gives nonpositive probabilities at theta = {theta!r}")
    yhat = _residuals(sample.counts.astype(float), p)
    prov = {"model_hash": array_hash(p), "n": sample.n, "family": family.name, "theta": theta}
    return ComponentVector(yhat, "parametric_yhat", prov)


def parametric_bundle(family, theta, anchor="plateau", mode="gram_schmidt") -> GeometryBundle:
    """Geometry for the estimated-parameter transform at ``theta``."""
    from .parametric import normalized_scores

    if isinstance(anchor, str):
        anchor = AnchorPair.preset_for(anchor, family.m)
    anchor = anchor.with_score_anchor()
    q = np.sqrt(family.probs(theta))
    qhat = normalized_scores(family, theta)
    return build_bases(q, qhat, anchor.r, anchor.rhat, mode=mode)


def _parametric_check(yhat, q):
    if yhat.kind != "parametric_yhat":
        raise ValueError(f"expected parametric_yhat components, got {yhat.kind!r}")
    check_same_dim(yhat.values, q, names=("components", "q"))
    lead = float(yhat.values @ q)
    if abs(lead) > ORTHOGONALITY_TOL * max(1.0, float(np.linalg.norm(yhat.values))):
        raise ValueError(f"<Yhat, q> = {lead:.3e}; components do not match q = sqrt(p(theta_hat))")
    return lead


def transform_parametric(yhat: ComponentVector, bundle: GeometryBundle, anchor: str = "custom") -> ComponentVector:
    """Rotate estimated-parameter components so their limit is ``X - <X,r>r - <X,rhat>rhat``.

    For ``Yhat`` orthogonal to ``q`` and ``qhat`` this equals
    ``Yhat - <Yhat, a3>(a3 - b3) - <Yhat, a4>(a4 - b4)``. The full operator is
    applied, so any leftover component along ``qhat`` (from an inexact score
    root) is carried onto ``rhat`` rather than lost.
    """
    lead = _parametric_check(yhat, bundle.q)
    op = build_rotation_4d(bundle)
    zhat = op.apply(yhat.values)
    prov = dict(yhat.provenance)
    prov.update(
        anchor_hash=bundle.anchor_hash,
        anchor=anchor,
        basis=bundle.mode,
        q_residual=lead,
        score_residual=float(yhat.values @ bundle.qhat),
    )
    return ComponentVector(zhat, "parametric_zhat", prov)


def transform_parametric_recursive(yhat: ComponentVector, q, qhat, r, rhat, anchor: str = "custom") -> ComponentVector:
    """Estimated-parameter rotation as a product of two reflections."""
    q = check_unit_vector(q, "q")
    lead = _parametric_check(yhat, q)
    op = recursive_rotation(q, qhat, r, rhat)
    zhat = op.apply(yhat.values)
    prov = dict(yhat.provenance)
    prov.update(
        anchor_hash=array_hash(np.asarray(r, float), np.asarray(rhat, float)),
        anchor=anchor,
        basis="recursive",
        q_residual=lead,
        score_residual=float(yhat.values @ np.asarray(qhat, float)),
    )
    return ComponentVector(zhat, "parametric_zhat", prov)
