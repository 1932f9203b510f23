"""Symmetric positive-definite helpers with diagonal-jitter fallback."""

import numpy as np
import scipy.linalg


class NumericalError(RuntimeError):
    """Raised when a numerical operation cannot be completed reliably."""


# Jitter escalation: start at 1e-10, multiply by 10 until 1e-6, then give up.
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


def _with_jitter(mat, op):
    jitter = 0.0
    while True:
        try:
            return op(mat if jitter == 0.0 else mat + jitter * np.eye(mat.shape[0]))
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            jitter = _JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX:
                raise NumericalError(
                    "matrix is not positive definite (jitter up to "
                    f"{_JITTER_MAX:g} did not help)"
                ) from None


def spd_inverse(mat: np.ndarray) -> np.ndarray:
    """Invert an SPD matrix via Cholesky; result is exactly symmetric."""

    def op(m):
        c, low = scipy.linalg.cho_factor(m, lower=True)
        inv = scipy.linalg.cho_solve((c, low), np.eye(m.shape[0]))
        return (inv + inv.T) / 2.0

    return _with_jitter(np.asarray(mat, dtype=float), op)


def spd_solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve mat @ x = rhs for SPD mat."""

    def op(m):
        c, low = scipy.linalg.cho_factor(m, lower=True)
        return scipy.linalg.cho_solve((c, low), rhs)

    return _with_jitter(np.asarray(mat, dtype=float), op)


def spd_logdet(mat: np.ndarray) -> float:
    """Log-determinant of an SPD matrix via Cholesky."""

    def op(m):
        c = scipy.linalg.cholesky(m, lower=True)
        return 2.0 * float(np.sum(np.log(np.diag(c))))

    return _with_jitter(np.asarray(mat, dtype=float), op)
