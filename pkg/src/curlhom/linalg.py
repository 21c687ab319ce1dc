"""Matrix-free Krylov solvers on arrays of arbitrary shape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = ["KrylovResult", "pcg", "cocg"]

Operator = Callable[[np.ndarray], np.ndarray]


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: list[float] = field(default_factory=list)


def _norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.sum(a.real**2 + a.imag**2))) if np.iscomplexobj(a) else float(np.sqrt(np.sum(a * a)))


def _krylov(
    apply_op: Operator,
    rhs: np.ndarray,
    precond: Operator | None,
    x0: np.ndarray | None,
    tol: float,
    maxiter: int,
    conjugate: bool,
) -> KrylovResult:
    identity = lambda r: r  # noqa: E731
    precond = precond or identity
    dot = (lambda a, b: np.vdot(a, b)) if conjugate else (lambda a, b: np.sum(a * b))
    rhs_norm = _norm(rhs)
    if rhs_norm == 0.0:
        return KrylovResult(np.zeros_like(rhs), 0, 0.0, True, [0.0])
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.result_type(x0, rhs))
    r = rhs - apply_op(x) if x0 is not None else rhs.copy()
    history = [_norm(r) / rhs_norm]
    if history[-1] <= tol:
        return KrylovResult(x, 0, history[-1], True, history)
    z = precond(r)
    p = z.copy()
    rz = dot(r, z) if conjugate else dot(z, r)
    for it in range(1, maxiter + 1):
        ap = apply_op(p)
        pap = dot(p, ap)
        if pap == 0:
            break
        step = rz / pap
        x = x + step * p
        r = r - step * ap
        history.append(_norm(r) / rhs_norm)
        if history[-1] <= tol:
            return KrylovResult(x, it, history[-1], True, history)
        z = precond(r)
        rz_new = dot(r, z) if conjugate else dot(z, r)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return KrylovResult(x, len(history) - 1, history[-1], history[-1] <= tol, history)


def pcg(
    apply_op: Operator,
    rhs: np.ndarray,
    *,
    precond: Operator | None = None,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    maxiter: int = 1000,
) -> KrylovResult:
    """Preconditioned conjugate gradients for Hermitian positive-definite operators.

    Stops when ``||b - A x|| <= tol ||b||`` in the Euclidean norm of the array.
    """
    return _krylov(apply_op, rhs, precond, x0, tol, maxiter, conjugate=True)


def cocg(
    apply_op: Operator,
    rhs: np.ndarray,
    *,
    precond: Operator | None = None,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    maxiter: int = 2000,
) -> KrylovResult:
    """Conjugate orthogonal CG for complex symmetric (non-Hermitian) operators.

    Uses the bilinear form ``sum(a * b)`` in place of the Hermitian product.
    The preconditioner must itself be complex symmetric.
    """
    return _krylov(apply_op, rhs, precond, x0, tol, maxiter, conjugate=False)
