"""Sample sets and Loewner / shifted-Loewner pencils built from a channel slice."""
from dataclasses import dataclass

import numpy as np

from .channel import slice_array
from .errors import ConfigError, InsufficientDataError, SingularityError


def reshape_column(col, n_tx):
    """``2*n_tx`` column -> ``(n_tx, 2)`` matrix with polarization on axis 1."""
    return np.asarray(col).reshape(2, n_tx).T


def unreshape(mat):
    """Inverse of :func:`reshape_column` for a stack ``(..., n_tx, 2)``."""
    mat = np.asarray(mat)
    return np.swapaxes(mat, -1, -2).reshape(mat.shape[:-2] + (-1,))


@dataclass
class SampleSet:
    left_freqs: np.ndarray    # (p,)
    left_values: np.ndarray   # (p, n_tx, 2)
    right_freqs: np.ndarray   # (q,)
    right_values: np.ndarray  # (q, n_tx, 2)
    stride: int = 1

    @property
    def p(self):
        return len(self.left_freqs)

    @property
    def q(self):
        return len(self.right_freqs)

    @property
    def n_total(self):
        return self.p + self.q

    @property
    def n_tx(self):
        return self.left_values.shape[1]

    def all_freqs(self):
        return np.sort(np.concatenate([self.left_freqs, self.right_freqs]))

    def all_values(self):
        """Sample values ordered by frequency, shape ``(N, n_tx, 2)``."""
        f = np.concatenate([self.left_freqs, self.right_freqs])
        v = np.concatenate([self.left_values, self.right_values])
        order = np.argsort(f, kind="stable")
        return v[order]


def sample_frequencies(n_samples, stride):
    """Uniform sampling grid ``1, 1+stride, ...`` (subcarrier indices)."""
    return 1.0 + stride * np.arange(n_samples)


def build_sample_set(slice_, n_samples, stride):
    """Uniformly sample a slice and split the samples by alternation.

    Odd positions (1st, 3rd, ...) go to the left set, even positions to the
    right set, so ``p = ceil(N/2)`` and ``q = floor(N/2)``.
    """
    data = slice_array(slice_)
    if n_samples < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n_samples}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n_sub = data.shape[1]
    if n_samples * stride > n_sub:
        raise ConfigError(f"{n_samples} samples at stride {stride} exceed {n_sub} subcarriers")
    n_tx = data.shape[0] // 2
    freqs = sample_frequencies(n_samples, stride)
    cols = data[:, (freqs - 1).astype(int)]                   # (2 n_tx, N)
    values = cols.T.reshape(n_samples, 2, n_tx).transpose(0, 2, 1)  # (N, n_tx, 2)
    return SampleSet(freqs[0::2], values[0::2], freqs[1::2], values[1::2], stride)


@dataclass
class LoewnerPencil:
    V: np.ndarray        # (p n_tx, 2)
    W: np.ndarray        # (n_tx, 2 q)
    L: np.ndarray        # (p n_tx, 2 q)
    L_sigma: np.ndarray  # (p n_tx, 2 q)
    sample_set: SampleSet

    def block(self, mat, i, j):
        n = self.sample_set.n_tx
        return mat[i * n:(i + 1) * n, 2 * j:2 * j + 2]


def assemble_pencil(s):
    lam, mu = np.asarray(s.left_freqs, float), np.asarray(s.right_freqs, float)
    denom = lam[:, None] - mu[None, :]
    hit = np.argwhere(denom == 0)
    if len(hit):
        i, j = hit[0]
        raise SingularityError(f"left sample {i} and right sample {j} share frequency {lam[i]}",
                               indices=[tuple(x) for x in hit])
    hl, hr = s.left_values, s.right_values
    p, q, n_tx = s.p, s.q, s.n_tx
    # blocks indexed (i, j, row, col) then flattened to (i row, j col)
    num = hl[:, None, :, :] - hr[None, :, :, :]
    num_s = lam[:, None, None, None] * hl[:, None, :, :] - mu[None, :, None, None] * hr[None, :, :, :]
    d = denom[:, :, None, None]
    L = (num / d).transpose(0, 2, 1, 3).reshape(p * n_tx, 2 * q)
    Ls = (num_s / d).transpose(0, 2, 1, 3).reshape(p * n_tx, 2 * q)
    V = hl.reshape(p * n_tx, 2)
    W = hr.transpose(1, 0, 2).reshape(n_tx, 2 * q)
    return LoewnerPencil(V, W, L, Ls, s)


def interpolation_defect(pencil, realization):
    """Relative Frobenius error of ``realization`` at each of the N samples,
    in frequency order."""
    from .mor import evaluate_many

    s = pencil.sample_set
    freqs = s.all_freqs()
    truth = s.all_values()
    approx = evaluate_many(realization, freqs)
    err = np.linalg.norm(approx - truth, axis=(1, 2))
    ref = np.linalg.norm(truth, axis=(1, 2))
    return err / np.where(ref > 0, ref, 1.0)
