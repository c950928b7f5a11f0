"""
BYOL regression loss f(q, z) = 2 - 2 <q, z> / (|q| |z|) and its gradient in q.

z is always a constant (target tower output); no gradient flows into it.
"""

import numpy as np

from engine.errors import NumericError
from engine.nn_core.tensor import Tensor

NORM_EPS = 1e-12


def _row_norms(x: Tensor, operand: str) -> Tensor:
    norms = np.linalg.norm(x, axis=-1)
    bad = np.flatnonzero(np.atleast_1d(norms <= NORM_EPS))
    if bad.size:
        index = int(bad[0]) if x.ndim == 2 else None
        raise NumericError(f"norm below {NORM_EPS:g}", operand=operand, sample_index=index)
    return norms


def byol_loss(q: Tensor, z: Tensor) -> float:
    """Loss for a single (q, z) pair of 1-D vectors; value in [0, 4]."""
    q = np.asarray(q, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    q_norm = _row_norms(q, "q")
    z_norm = _row_norms(z, "z")
    cosine = float(q @ z) / float(q_norm * z_norm)
    return float(np.clip(2.0 - 2.0 * cosine, 0.0, 4.0))


def byol_loss_rows(q: Tensor, z: Tensor) -> Tensor:
    """Row-wise loss for [B, n] inputs."""
    q_norm = _row_norms(q, "q")
    z_norm = _row_norms(z, "z")
    cosine = np.einsum("ij,ij->i", q, z) / (q_norm * z_norm)
    return np.clip(2.0 - 2.0 * cosine, 0.0, 4.0)


def byol_loss_grad_rows(q: Tensor, z: Tensor) -> Tensor:
    """
    Row-wise gradient of the loss with respect to q:
    2 (<q, z> q / (|q|^3 |z|) - z / (|q| |z|)).
    """
    q_norm = _row_norms(q, "q")[:, None]
    z_norm = _row_norms(z, "z")[:, None]
    dots = np.einsum("ij,ij->i", q, z)[:, None]
    return 2.0 * (dots * q / (q_norm ** 3 * z_norm) - z / (q_norm * z_norm))
