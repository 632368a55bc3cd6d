"""Least-squares clutter cancellation.

Zero-Doppler content in a surveillance window is modeled as a superposition
of the reference window delayed by 0..num_taps-1 samples. The least-squares
fit of that model is subtracted, leaving Doppler-shifted components intact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, IllConditionedError

# Gram matrices of delayed wideband reference copies are near-singular well
# before this; beyond it the unregularized solve is meaningless.
_COND_LIMIT = 1e12


@dataclass
class ClutterConfig:
    num_taps: int = 16
    regularization: float = 1e-8  # ridge weight, scaled by window energy

    def __post_init__(self):
        if self.num_taps < 1:
            raise ConfigurationError("num_taps must be >= 1")
        if self.regularization < 0:
            raise ConfigurationError("regularization must be >= 0")


def _delay_matrix(ref: np.ndarray, num_taps: int) -> np.ndarray:
    """(N, M) matrix whose column j is ref delayed by j samples, zero-filled."""
    n = ref.size
    padded = np.concatenate([np.zeros(num_taps - 1, dtype=ref.dtype), ref])
    view = np.lib.stride_tricks.sliding_window_view(padded, n)
    return np.ascontiguousarray(view[::-1].T)


def ls_clutter_cancel(surv: np.ndarray, ref: np.ndarray,
                      cfg: ClutterConfig | None = None) -> np.ndarray:
    """Subtract the LS projection of surv onto delayed copies of ref.

    Solves min_c ||surv - Y c||^2 + eps ||c||^2 with Y holding causal integer
    delays 0..num_taps-1 of ref, via the normal equations, and returns the
    residual surv - Y c. With regularization 0 a numerically singular normal
    matrix raises IllConditionedError.
    """
    cfg = cfg or ClutterConfig()
    surv = np.asarray(surv, dtype=np.complex128)
    ref = np.asarray(ref, dtype=np.complex128)
    if surv.shape != ref.shape or surv.ndim != 1:
        raise ContractError(
            f"windows must be equal-length 1-D arrays, got {surv.shape} and {ref.shape}"
        )
    n = surv.size
    if n <= cfg.num_taps:
        raise ContractError("window must be longer than the tap count")
    if cfg.num_taps > max(1, n // 100):
        raise ContractError(
            f"num_taps={cfg.num_taps} exceeds window_len/100={n // 100}"
        )
    if not np.any(surv):
        return np.zeros_like(surv)

    y_mat = _delay_matrix(ref, cfg.num_taps)
    gram = y_mat.conj().T @ y_mat
    rhs = y_mat.conj().T @ surv

    ridge = cfg.regularization * float(np.sum(np.abs(ref) ** 2))
    if ridge == 0.0:
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise IllConditionedError(
                f"normal matrix condition number {cond:.2e} is singular at "
                "regularization 0; set regularization > 0"
            )
        coeffs = np.linalg.solve(gram, rhs)
    else:
        coeffs = np.linalg.solve(gram + ridge * np.eye(cfg.num_taps), rhs)
    return surv - y_mat @ coeffs
