"""Basis change that stops spatial-codec errors from being amplified by the
frequency interpolation, followed by a unitary DFT for sparsity.

Both ends rebuild the frequency Gram ``Y`` from ``(a, B)`` and the uniform
sample grid, so ``U_Y`` and ``Sigma_Y`` never travel on the wire.  Because
the thin SVD is unique only up to a phase per singular pair, the phase
rule in :func:`normalized_svd` is part of the wire contract.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IllConditionedError, RankError, SingularityError
from .mor import POLE_TOL

RANK_TOL = 1e-12


@dataclass
class FrequencyGram:
    y: np.ndarray       # (r_f, 2N)
    freqs: np.ndarray   # (N,)


@dataclass
class TransformedBasis:
    c4: np.ndarray       # (n_tx, r_f)
    c5: np.ndarray       # (n_tx, r_f)
    u_y: np.ndarray      # (r_f, r_f)
    sigma_y: np.ndarray  # (r_f,)
    v_y_h: np.ndarray    # (r_f, 2N)


def dft_matrix(n):
    """Unitary DFT, ``F[i, k] = exp(-2j pi i k / n) / sqrt(n)``."""
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def build_gram(r, freqs):
    """``Y = [(f_1 I - A)^-1 B, ..., (f_N I - A)^-1 B]`` for the diagonal
    ``A`` and ``B`` of realization ``r``."""
    return gram_from_poles(r.a_diag, r.b, freqs)


def gram_from_poles(a_diag, b, freqs):
    a_diag = np.asarray(a_diag, dtype=complex)
    b = np.asarray(b, dtype=complex)
    freqs = np.asarray(freqs, dtype=float)
    r_f, n = len(a_diag), len(freqs)
    if r_f >= 2 * n:
        raise ConfigError(f"r_f={r_f} must be smaller than 2N={2 * n}")
    diff = freqs[None, :] - a_diag[:, None]  # (r, N)
    bad = np.argwhere(np.abs(diff) < POLE_TOL * (1.0 + np.abs(freqs))[None, :])
    if len(bad):
        k, j = bad[0]
        raise SingularityError(f"sample frequency {freqs[j]} collides with pole {k}",
                               indices=[(int(j), int(k)) for k, j in bad])
    y = (b[:, None, :] / diff[:, :, None]).reshape(r_f, 2 * n)
    return FrequencyGram(y, freqs)


def normalized_svd(y):
    """Thin SVD with each left singular vector rotated so that its
    largest-magnitude entry (first one on ties) is real and positive."""
    u, s, vh = np.linalg.svd(y, full_matrices=False)
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(u.shape[1])]
    mag = np.abs(ph)
    ph = ph / mag
    u = u * ph.conj()[None, :]
    u[idx, np.arange(u.shape[1])] = mag   # exactly real, not just to rounding
    vh = vh * ph[:, None]
    return u, s, vh


def _checked_svd(y, exc):
    u, s, vh = normalized_svd(y)
    if s[0] == 0 or s[-1] <= RANK_TOL * s[0]:
        gap = s[-1] / s[0] if s[0] else 0.0
        raise exc(f"Y is rank deficient: sigma_min/sigma_max = {gap:.3e}")
    return u, s, vh


def forward_transform(c3, gram):
    """``C4 = C3 U_Y Sigma_Y`` and ``C5 = F C4``."""
    c3 = np.asarray(c3, dtype=complex)
    if c3.shape[1] != gram.y.shape[0]:
        raise ConfigError("C3 column count must equal r_f")
    u, s, vh = _checked_svd(gram.y, RankError)
    c4 = (c3 @ u) * s[None, :]
    c5 = dft_matrix(c3.shape[0]) @ c4
    return TransformedBasis(c4, c5, u, s, vh)


def receiver_basis(a_diag, b, freqs, exc=IllConditionedError):
    """``(U_Y, Sigma_Y)`` of the Gram rebuilt from dequantized poles and ``B``;
    ``exc`` is raised when that Gram has lost rank."""
    u, s, _ = _checked_svd(gram_from_poles(a_diag, b, freqs).y, exc)
    return u, s


def inverse_from_basis(c5_hat, u, s):
    c5_hat = np.asarray(c5_hat, dtype=complex)
    c4 = dft_matrix(c5_hat.shape[0]).conj().T @ c5_hat
    return (c4 / s[None, :]) @ u.conj().T


def inverse_transform(c5_hat, r_hat, freqs):
    """Receiver side: ``C3 = F^H C5 Sigma^-1 U^H`` with ``U, Sigma`` from the
    Gram rebuilt out of the dequantized poles and ``B`` in ``r_hat``."""
    u, s = receiver_basis(r_hat.a_diag, r_hat.b, freqs)
    return inverse_from_basis(c5_hat, u, s)
