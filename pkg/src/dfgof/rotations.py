"""Structured orthogonal operators that pin model directions to fixed anchors.

Every operator here has the form ``I + L.T @ R`` with ``L`` and ``R`` of
shape ``(k, m)`` and ``k <= 4``, so applying it to a vector costs ``O(k m)``.
A dense ``m x m`` matrix is only produced by :meth:`RotationOp.materialize`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ._validation import array_hash, check_same_dim, check_unit_vector
from .exceptions import (
    ConditioningWarning,
    DegenerateGeometry,
    DimensionMismatch,
    NonOrthogonalInputs,
)

#: ``||q - r||`` at or below this gives the identity operator.
IDENTITY_TOL = 1e-12
#: ``||q - r||`` below this attaches a conditioning warning.
CONDITIONING_TOL = 1e-8
#: Allowed ``|<q, qhat>|`` and ``|<r, rhat>|`` when building 4-D bases.
ORTHOGONALITY_TOL = 1e-8
#: Smallest admissible eigenvalue of the Gram matrix of ``(q, qhat, r, rhat)``.
GRAM_EIG_TOL = 1e-8

FORMS = ("identity", "two-subspace", "four-subspace", "householder", "composed")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RotationOp:
    """Orthogonal operator ``I + left.T @ right`` (or a product of such).

    Attributes
    ----------
    dim : int
        Dimension ``m`` of the space the operator acts on.
    form : str
        One of ``identity``, ``two-subspace``, ``four-subspace``,
        ``householder`` or ``composed``.
    left, right : ndarray of shape (k, m)
        Rank-``k`` correction factors. Empty for ``composed``.
    sources, targets : tuple of ndarray
        Unit vectors the operator is built to carry onto each other.
    parts : tuple of RotationOp
        Factors of a composed operator, in order of application.
    ill_conditioned : bool
        Set when the defining vectors were closer than ``CONDITIONING_TOL``.
    """

    dim: int
    form: str
    left: np.ndarray
    right: np.ndarray
    sources: tuple = ()
    targets: tuple = ()
    parts: tuple = ()
    ill_conditioned: bool = False

    def apply(self, x):
        """Apply the operator to ``x`` (a vector, or a batch of row vectors)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"operator has dimension {self.dim}, input has {x.shape[-1]}")
        if self.form == "composed":
            for op in self.parts:
                x = op.apply(x)
            return x
        if self.left.shape[0] == 0:
            return x.copy()
        return x + (x @ self.right.T) @ self.left

    def transpose(self) -> "RotationOp":
        """Return the transposed operator, which is also its inverse."""
        if self.form == "composed":
            return RotationOp(
                self.dim,
                "composed",
                self.left,
                self.right,
                sources=self.targets,
                targets=self.sources,
                parts=tuple(op.transpose() for op in reversed(self.parts)),
                ill_conditioned=self.ill_conditioned,
            )
        return RotationOp(
            self.dim,
            self.form,
            self.right,
            self.left,
            sources=self.targets,
            targets=self.sources,
            ill_conditioned=self.ill_conditioned,
        )

    T = property(transpose)

    def materialize(self) -> np.ndarray:
        """Dense matrix of the operator. Intended for testing only."""
        return self.apply(np.eye(self.dim)).T

    def __matmul__(self, x):
        return self.apply(x)


def identity(m: int) -> RotationOp:
    empty = _frozen(np.zeros((0, m)))
    return RotationOp(m, "identity", empty, empty)


def _basis_map(form, e, f, sources, targets, ill_conditioned=False):
    # Maps orthonormal rows e onto orthonormal rows f, fixing their orthocomplement.
    e = np.atleast_2d(e)
    f = np.atleast_2d(f)
    return RotationOp(
        e.shape[1],
        form,
        _frozen(f - e),
        _frozen(e),
        sources=tuple(_frozen(s) for s in sources),
        targets=tuple(_frozen(t) for t in targets),
        ill_conditioned=ill_conditioned,
    )


def orthogonal_part(q, r):
    """Part of ``q`` orthogonal to ``r``, and its norm.

    Parameters
    ----------
    q, r : array_like
        Unit vectors of equal dimension.

    Returns
    -------
    q_perp : ndarray
        ``q - <q, r> r``.
    mu : float
        ``||q_perp||``, so that ``mu**2 + <q, r>**2 == 1``.
    """
    q = check_unit_vector(q, "q")
    r = check_unit_vector(r, "r")
    check_same_dim(q, r, names=("q", "r"))
    c = float(q @ r)
    q_perp = q - c * r
    return q_perp, float(np.linalg.norm(q_perp))


def _closeness(q, r):
    dist = float(np.linalg.norm(q - r))
    if dist <= IDENTITY_TOL:
        return dist, None
    ill = dist < CONDITIONING_TOL
    if ill:
        warnings.warn(
            f"||q - r|| = {dist:.3e} is below {CONDITIONING_TOL:g}; the rotation is ill-conditioned",
            ConditioningWarning,
            stacklevel=3,
        )
    return dist, ill


def build_rotation_2d(q, r) -> RotationOp:
    """Orthogonal operator that turns ``q`` into ``r`` inside ``span{q, r}``.

    The operator is the identity on the orthocomplement of ``span{q, r}``
    and ``U = r q^T + q_perp r_perp^T / mu^2`` on the span, so it maps ``q``
    to ``r`` and ``r_perp`` (the part of ``r`` orthogonal to ``q``) to
    ``q_perp``.

    On the span this operator coincides with the reflection through the
    hyperplane orthogonal to ``u = (r - q) / ||r - q||``; it is built in that
    form because ``u`` stays exactly unit even when ``q`` and ``r`` nearly
    coincide, whereas ``r_perp / mu`` loses orthogonality there. Antipodal
    inputs give ``I - 2 r r^T``.

    When ``||q - r|| <= 1e-12`` the identity is returned.
    """
    q = check_unit_vector(q, "q")
    r = check_unit_vector(r, "r")
    m = check_same_dim(q, r, names=("q", "r"))
    dist, ill = _closeness(q, r)
    if ill is None:
        return identity(m)
    u = (r - q) / np.linalg.norm(r - q)
    c = float(q @ r)
    mu = float(np.linalg.norm(q - c * r))
    if mu <= IDENTITY_TOL:
        sources, targets = (q,), (r,)
    else:
        sources, targets = (q, (r - c * q) / mu), (r, (q - c * r) / mu)
    return RotationOp(
        m,
        "two-subspace",
        _frozen(-2.0 * u[None, :]),
        _frozen(u[None, :]),
        sources=tuple(_frozen(v) for v in sources),
        targets=tuple(_frozen(v) for v in targets),
        ill_conditioned=ill,
    )


def householder_map(q, r) -> RotationOp:
    """Reflection ``I - 2 v v^T / ||v||^2`` with ``v = r - q``.

    Swaps ``q`` and ``r`` and fixes every vector orthogonal to both.
    Returns the identity when ``||q - r|| <= 1e-12``.
    """
    q = check_unit_vector(q, "q")
    r = check_unit_vector(r, "r")
    m = check_same_dim(q, r, names=("q", "r"))
    dist, ill = _closeness(q, r)
    if ill is None:
        return identity(m)
    v = r - q
    vv = float(v @ v)
    hellinger = 2.0 * (1.0 - float(q @ r))
    if abs(vv - hellinger) > 1e-12:
        raise ValueError(f"||r - q||^2 = {vv!r} disagrees with 2(1 - <q,r>) = {hellinger!r}")
    return RotationOp(
        m,
        "householder",
        _frozen((-2.0 / vv) * v[None, :]),
        _frozen(v[None, :]),
        sources=(_frozen(q), _frozen(r)),
        targets=(_frozen(r), _frozen(q)),
        ill_conditioned=ill,
    )


def compose(first: RotationOp, second: RotationOp) -> RotationOp:
    """Operator that applies ``first`` and then ``second``."""
    if first.dim != second.dim:
        raise DimensionMismatch(f"cannot compose operators of dimension {first.dim} and {second.dim}")
    parts = []
    for op in (first, second):
        if op.form == "composed":
            parts.extend(op.parts)
        elif op.form != "identity":
            parts.append(op)
    empty = _frozen(np.zeros((0, first.dim)))
    return RotationOp(
        first.dim,
        "composed",
        empty,
        empty,
        sources=first.sources,
        targets=tuple(second.apply(t) for t in first.targets),
        parts=tuple(parts),
        ill_conditioned=first.ill_conditioned or second.ill_conditioned,
    )


@dataclass(frozen=True)
class GeometryBundle:
    """Unit vectors and derived bases for the estimated-parameter rotation.

    ``a3, a4`` complete ``(q, qhat)`` and ``b3, b4`` complete ``(r, rhat)``
    to orthonormal bases of the same 4-dimensional subspace.
    """

    q: np.ndarray
    qhat: np.ndarray
    r: np.ndarray
    rhat: np.ndarray
    mu: float
    a3: np.ndarray
    a4: np.ndarray
    b3: np.ndarray
    b4: np.ndarray
    mode: str = "gram_schmidt"
    rho: float | None = None
    rho_b: float | None = None
    gram_min_eig: float = field(default=float("nan"))
    #: hash of the anchors as supplied, before re-orthogonalization
    anchor_hash: str = ""


def _residual(v, basis):
    # Two passes of modified Gram-Schmidt keep orthogonality at machine precision.
    out = np.array(v, dtype=float)
    for _ in range(2):
        for b in basis:
            out = out - (out @ b) * b
    return out


def _unit(v, what):
    n = float(np.linalg.norm(v))
    if n <= GRAM_EIG_TOL:
        raise DegenerateGeometry(f"{what} vanishes; span(q, qhat, r, rhat) is not 4-dimensional")
    return v / n


def _symmetric_pair(u, v):
    rho = float(u @ v)
    if not -1.0 < rho < 1.0:
        raise DegenerateGeometry(f"correlation {rho!r} leaves no symmetric basis")
    s = (u + v) / np.sqrt(2.0 * (1.0 + rho))
    d = (u - v) / np.sqrt(2.0 * (1.0 - rho))
    return s, d, rho


def build_bases(q, qhat, r, rhat, mode="gram_schmidt") -> GeometryBundle:
    """Complete ``(q, qhat)`` and ``(r, rhat)`` to bases of their joint span.

    Parameters
    ----------
    q, qhat, r, rhat : array_like
        Unit vectors with ``q`` orthogonal to ``qhat`` and ``r`` orthogonal
        to ``rhat`` (to within 1e-8; the second vector of each pair is
        re-orthogonalized before use).
    mode : {"gram_schmidt", "symmetric", "householder"}
        ``gram_schmidt`` takes ``a3`` from the residual of ``r`` and ``a4``
        from the residual of ``rhat`` (and dually for ``b3, b4``).
        ``symmetric`` uses normalized sums and differences of the two
        residuals. ``householder`` keeps the Gram-Schmidt ``a3, a4`` and sets
        ``b3, b4`` to their images under the product of two reflections, which
        makes the 4-D operator coincide with that product.

    Raises
    ------
    NonOrthogonalInputs
        If ``|<q, qhat>|`` or ``|<r, rhat>|`` exceeds 1e-8.
    DegenerateGeometry
        If the smallest eigenvalue of the 4x4 Gram matrix is at most 1e-8.
    """
    q = check_unit_vector(q, "q")
    qhat = check_unit_vector(qhat, "qhat", tol=ORTHOGONALITY_TOL)
    r = check_unit_vector(r, "r")
    rhat = check_unit_vector(rhat, "rhat", tol=ORTHOGONALITY_TOL)
    check_same_dim(q, qhat, r, rhat, names=("q", "qhat", "r", "rhat"))
    if mode not in ("gram_schmidt", "symmetric", "householder"):
        raise ValueError(f"unknown basis mode {mode!r}")
    for name, x, y in (("<q, qhat>", q, qhat), ("<r, rhat>", r, rhat)):
        if abs(float(x @ y)) > ORTHOGONALITY_TOL:
            raise NonOrthogonalInputs(f"{name} = {float(x @ y):.3e} exceeds {ORTHOGONALITY_TOL:g}")
    anchor_hash = array_hash(r, rhat)
    qhat = _unit(_residual(qhat, [q]), "qhat")
    rhat = _unit(_residual(rhat, [r]), "rhat")

    vecs = np.vstack([q, qhat, r, rhat])
    gram_min = float(np.linalg.eigvalsh(vecs @ vecs.T)[0])
    if gram_min <= GRAM_EIG_TOL:
        raise DegenerateGeometry(
            f"Gram matrix of (q, qhat, r, rhat) has smallest eigenvalue {gram_min:.3e}"
        )

    c = float(q @ r)
    mu = float(np.sqrt(max(0.0, 1.0 - c * c)))
    rho = rho_b = None
    if mode == "symmetric":
        u = _unit(_residual(r, [q, qhat]), "r residual")
        v = _unit(_residual(rhat, [q, qhat]), "rhat residual")
        a3, a4, rho = _symmetric_pair(u, v)
        s = _unit(_residual(q, [r, rhat]), "q residual")
        t = _unit(_residual(qhat, [r, rhat]), "qhat residual")
        b3, b4, rho_b = _symmetric_pair(s, t)
    else:
        a3 = _unit(_residual(r, [q, qhat]), "r residual")
        a4 = _unit(_residual(rhat, [q, qhat, a3]), "rhat residual")
        if mode == "gram_schmidt":
            b3 = _unit(_residual(q, [r, rhat]), "q residual")
            b4 = _unit(_residual(qhat, [r, rhat, b3]), "qhat residual")
        else:
            h = _householder_pair(q, qhat, r, rhat)
            b3 = _residual(h.apply(a3), [r, rhat])
            b3 = b3 / np.linalg.norm(b3)
            b4 = _residual(h.apply(a4), [r, rhat, b3])
            b4 = b4 / np.linalg.norm(b4)

    return GeometryBundle(
        q=_frozen(q),
        qhat=_frozen(qhat),
        r=_frozen(r),
        rhat=_frozen(rhat),
        mu=mu,
        a3=_frozen(a3),
        a4=_frozen(a4),
        b3=_frozen(b3),
        b4=_frozen(b4),
        mode=mode,
        rho=rho,
        rho_b=rho_b,
        gram_min_eig=gram_min,
        anchor_hash=anchor_hash,
    )


def _householder_pair(q, qhat, r, rhat) -> RotationOp:
    first = householder_map(q, r)
    qtilde = first.apply(qhat)
    qtilde = qtilde / np.linalg.norm(qtilde)
    return compose(first, householder_map(qtilde, rhat))


def build_rotation_4d(bundle: GeometryBundle) -> RotationOp:
    """Operator mapping ``q, qhat, a3, a4`` to ``r, rhat, b3, b4``.

    It is the identity on the orthocomplement of the 4-dimensional span.
    """
    e = np.vstack([bundle.q, bundle.qhat, bundle.a3, bundle.a4])
    f = np.vstack([bundle.r, bundle.rhat, bundle.b3, bundle.b4])
    return _basis_map("four-subspace", e, f, tuple(e), tuple(f))


def recursive_rotation(q, qhat, r, rhat) -> RotationOp:
    """Product of reflections ``U(qtilde, rhat) U(q, r)`` with ``qtilde = U(q, r) qhat``.

    ``qhat`` and ``rhat`` may also be ``(kappa, m)`` arrays of orthonormal
    rows, one per parameter. Each further reflection carries the image of
    the next score direction onto the next anchor, in row order, leaving the
    anchors already placed untouched. No 4-dimensional span condition is
    imposed.
    """
    q = check_unit_vector(q, "q")
    r = check_unit_vector(r, "r")
    qhats = np.atleast_2d(np.asarray(qhat, dtype=float))
    rhats = np.atleast_2d(np.asarray(rhat, dtype=float))
    if qhats.shape != rhats.shape:
        raise DimensionMismatch(f"qhat has shape {qhats.shape}, rhat has {rhats.shape}")
    check_same_dim(q, r, qhats, rhats, names=("q", "r", "qhat", "rhat"))
    qs, rs = [q], [r]
    for k, (qh, rh) in enumerate(zip(qhats, rhats)):
        qh = check_unit_vector(qh, f"qhat[{k}]", tol=ORTHOGONALITY_TOL)
        rh = check_unit_vector(rh, f"rhat[{k}]", tol=ORTHOGONALITY_TOL)
        for name, x, prev in (("qhat", qh, qs), ("rhat", rh, rs)):
            worst = max(abs(float(x @ b)) for b in prev)
            if worst > ORTHOGONALITY_TOL:
                raise NonOrthogonalInputs(f"{name}[{k}] is not orthogonal to earlier directions ({worst:.3e})")
        qs.append(_unit(_residual(qh, qs), f"qhat[{k}]"))
        rs.append(_unit(_residual(rh, rs), f"rhat[{k}]"))
    op = householder_map(q, r)
    for qh, rh in zip(qs[1:], rs[1:]):
        qtilde = op.apply(qh)
        op = compose(op, householder_map(qtilde / np.linalg.norm(qtilde), rh))
    return op
