"""Order reduction of a Loewner pencil to a diagonal realization ``(a, B, C)``.

The reduced model evaluates as ``C diag(1/(f - a)) B`` and is what the
receiver uses to rebuild every subcarrier.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DiagonalizationError, IllConditionedError, SingularityError

E_COND_TOL = 1e-12
EIGVEC_COND_MAX = 1e12
POLE_TOL = 1e-9


@dataclass
class ReducedRealization:
    a_diag: np.ndarray   # (r,) poles
    b: np.ndarray        # (r, 2)
    c: np.ndarray        # (n_tx, r)
    lambda_ref: float = float("nan")

    @property
    def r_f(self):
        return len(self.a_diag)

    @property
    def n_tx(self):
        return self.c.shape[0]

    def scaled(self, s):
        return ReducedRealization(self.a_diag, self.b, s * self.c, self.lambda_ref)


@dataclass
class ReductionDiagnostics:
    singular_values: np.ndarray
    discarded_energy: float
    sigma_e_min: float
    sigma_e_max: float = float("nan")


def reference_frequency(sample_set):
    """Left-sample frequency closest to the median of all sample frequencies
    (first one on ties)."""
    med = np.median(sample_set.all_freqs())
    lam = np.asarray(sample_set.left_freqs)
    return float(lam[np.argmin(np.abs(lam - med))])


def pencil_svd(pencil, lam=None):
    if lam is None:
        lam = reference_frequency(pencil.sample_set)
    Y, s, Xh = np.linalg.svd(pencil.L_sigma - lam * pencil.L, full_matrices=False)
    return lam, Y, s, Xh


def numerical_rank(pencil, rel_tol):
    """Number of singular values of ``L_sigma - lambda_mid L`` above
    ``rel_tol`` times the largest."""
    if not 0 < rel_tol <= 1:
        raise ConfigError(f"rel_tol must be in (0, 1], got {rel_tol}")
    _, _, s, _ = pencil_svd(pencil)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def reduce_order(pencil, r_f):
    """Project the pencil on its dominant ``r_f``-dimensional subspaces,
    normalise E to identity and diagonalise A.

    Poles are returned sorted by magnitude, largest first.
    """
    p_nt, two_q = pencil.L.shape
    if not 1 <= r_f <= min(p_nt, two_q):
        raise ConfigError(f"r_f={r_f} outside [1, {min(p_nt, two_q)}]")
    lam, Y, s, Xh = pencil_svd(pencil)
    Yp = Y[:, :r_f]
    Xp = Xh[:r_f].conj().T
    Yph = Yp.conj().T

    E1 = -Yph @ pencil.L @ Xp
    A1 = -Yph @ pencil.L_sigma @ Xp
    B1 = Yph @ pencil.V
    C1 = pencil.W @ Xp

    Ue, se, Veh = np.linalg.svd(E1)
    if se[0] == 0 or se[-1] / se[0] < E_COND_TOL:
        raise IllConditionedError(
            f"E1 is ill-conditioned: smallest singular value {se[-1]:.3e} "
            f"vs largest {se[0]:.3e}")
    isq = 1.0 / np.sqrt(se)
    Ve = Veh.conj().T
    C2 = (C1 @ Ve) * isq[None, :]
    A2 = isq[:, None] * (Ue.conj().T @ A1 @ Ve) * isq[None, :]
    B2 = isq[:, None] * (Ue.conj().T @ B1)

    evals, Ua = np.linalg.eig(A2)
    cond = np.linalg.cond(Ua)
    if not np.isfinite(cond) or cond > EIGVEC_COND_MAX:
        raise DiagonalizationError(f"A2 is (nearly) defective: eigenvector condition number {cond:.3e}")
    order = np.argsort(-np.abs(evals), kind="stable")
    evals, Ua = evals[order], Ua[:, order]
    C3 = C2 @ Ua
    B3 = np.linalg.solve(Ua, B2)

    diag = ReductionDiagnostics(
        singular_values=s,
        discarded_energy=float(np.sum(s[r_f:] ** 2)),
        sigma_e_min=float(se[-1]),
        sigma_e_max=float(se[0]),
    )
    return ReducedRealization(evals, B3, C3, lam), diag


def _check_poles(a, freqs):
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    gap = np.abs(freqs[:, None] - a[None, :])
    bad = np.argwhere(gap < POLE_TOL * (1.0 + np.abs(freqs))[:, None])
    if len(bad):
        fi, k = bad[0]
        raise SingularityError(f"frequency {freqs[fi]} is within tolerance of pole {k} ({a[k]})",
                               indices=[tuple(x) for x in bad])
    return freqs


def evaluate_realization(r, f):
    """``C diag(1/(f - a)) B`` as an ``(n_tx, 2)`` matrix."""
    _check_poles(r.a_diag, f)
    w = 1.0 / (f - r.a_diag)
    return (r.c * w[None, :]) @ r.b


def evaluate_many(r, freqs):
    """Stack of evaluations, shape ``(len(freqs), n_tx, 2)``."""
    freqs = _check_poles(r.a_diag, freqs)
    w = 1.0 / (freqs[:, None] - r.a_diag[None, :])  # (F, r)
    return np.einsum("tk,fk,kp->ftp", r.c, w, r.b, optimize=True)


def realization_to_slice(r, n_sub):
    """Evaluate at subcarriers ``1..n_sub`` and lay out as ``(2 n_tx, n_sub)``."""
    vals = evaluate_many(r, np.arange(1, n_sub + 1, dtype=float))  # (F, n_tx, 2)
    return vals.transpose(2, 1, 0).reshape(2 * r.n_tx, n_sub)
