"""Scalar quantizers for the feedback set ``{poles, B, codeword}``, the
first-order sensitivity of the sampled-point error to the quantized
subspace, and the bit-allocation loop that reacts to it."""
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .transform import gram_from_poles, normalized_svd

MAX_BITS = 16
UNIFORM, MU_LAW = 0, 1
SCHEMES = {"uniform": UNIFORM, "mu-law": MU_LAW, "mulaw": MU_LAW}


@dataclass(frozen=True)
class QuantSpec:
    a_bits_mag: int = 8
    a_bits_phase: int = 8
    b_bits_mag: int = 8
    b_bits_phase: int = 8
    v_bits: int = 6
    v_scheme: int = MU_LAW
    mu: float = 255.0

    def validate(self):
        for name in ("a_bits_mag", "a_bits_phase", "b_bits_mag", "b_bits_phase", "v_bits"):
            bits = getattr(self, name)
            if not 1 <= bits <= MAX_BITS:
                raise ConfigError(f"{name}={bits} outside [1, {MAX_BITS}]")
        if self.v_scheme not in (UNIFORM, MU_LAW):
            raise ConfigError(f"unknown v_scheme {self.v_scheme}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        return self

    def bumped(self, d_mag, d_phase):
        return replace(
            self,
            a_bits_mag=min(self.a_bits_mag + d_mag, MAX_BITS),
            a_bits_phase=min(self.a_bits_phase + d_phase, MAX_BITS),
            b_bits_mag=min(self.b_bits_mag + d_mag, MAX_BITS),
            b_bits_phase=min(self.b_bits_phase + d_phase, MAX_BITS),
        )

    def ab_code_bits(self, r_f):
        return r_f * (self.a_bits_mag + self.a_bits_phase) + 2 * r_f * (self.b_bits_mag + self.b_bits_phase)


def parse_scheme(name):
    if isinstance(name, (int, np.integer)):
        return int(name)
    try:
        return SCHEMES[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown quantization scheme {name!r}") from None


# -- primitives --------------------------------------------------------------

def uniform_quantize(x, lo, hi, bits):
    """``2**bits`` levels spanning ``[lo, hi]`` inclusive; both ends are exact."""
    x = np.asarray(x, dtype=float)
    top = (1 << bits) - 1
    if not hi > lo:
        return np.zeros(x.shape, dtype=np.uint32)
    step = (hi - lo) / top
    return np.clip(np.rint((x - lo) / step), 0, top).astype(np.uint32)


def uniform_dequantize(codes, lo, hi, bits):
    codes = np.asarray(codes, dtype=float)
    if not hi > lo:
        return np.full(codes.shape, float(lo))
    return lo + codes * ((hi - lo) / ((1 << bits) - 1))


def uniform_step(lo, hi, bits):
    return (hi - lo) / ((1 << bits) - 1) if hi > lo else 0.0


def phase_quantize(phi, bits):
    """Mid-rise cells of width ``2 pi / 2**bits`` over ``[-pi, pi)``."""
    n = 1 << bits
    w = 2 * np.pi / n
    return (np.floor((np.asarray(phi) + np.pi) / w).astype(np.int64) % n).astype(np.uint32)


def phase_dequantize(codes, bits):
    w = 2 * np.pi / (1 << bits)
    return -np.pi + (np.asarray(codes, dtype=float) + 0.5) * w


def phase_distance(a, b):
    """Modular distance on the circle."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, 2 * np.pi) - np.pi
    return np.abs(d)


def mu_compand(x, mu):
    """``sign(x) ln(1 + mu |x|) / ln(1 + mu)`` for ``x`` in ``[-1, 1]``."""
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mu_expand(y, mu):
    y = np.asarray(y, dtype=float)
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu


# -- field quantizers ----------------------------------------------------------

def quantize_a(a_diag, bits_mag, bits_phase):
    """Bias-removed magnitude/phase quantization of the poles.

    Returns ``(mag_codes, phase_codes, bias, (mag_min, mag_max))``.
    """
    a = np.asarray(a_diag, dtype=complex)
    if a.size < 1:
        raise ConfigError("need at least one pole")
    if np.all(a == a[0]):
        bias = complex(a[0])
    else:
        bias = complex(np.mean(a))
    res = a - bias
    mag = np.abs(res)
    lo, hi = float(mag.min()), float(mag.max())
    mcodes = uniform_quantize(mag, lo, hi, bits_mag)
    pcodes = phase_quantize(np.angle(res), bits_phase)
    pcodes[res == 0] = 0
    return mcodes, pcodes, bias, (lo, hi)


def dequantize_a(mag_codes, phase_codes, bias, mag_range, bits_mag, bits_phase):
    mag = uniform_dequantize(mag_codes, mag_range[0], mag_range[1], bits_mag)
    return bias + mag * np.exp(1j * phase_dequantize(phase_codes, bits_phase))


def quantize_b(b, bits_mag, bits_phase):
    """Scale by the largest magnitude, then quantize magnitude in ``[0, 1]``
    and phase.  Returns ``(mag_codes, phase_codes, scale)`` with codes in
    row-major order of ``b``."""
    b = np.asarray(b, dtype=complex)
    if b.size == 0:
        raise ConfigError("B must be non-empty")
    flat = b.ravel()
    scale = float(np.abs(flat).max())
    if scale == 0:
        z = np.zeros(flat.shape, dtype=np.uint32)
        return z, z.copy(), 1.0
    mcodes = uniform_quantize(np.abs(flat) / scale, 0.0, 1.0, bits_mag)
    pcodes = phase_quantize(np.angle(flat), bits_phase)
    return mcodes, pcodes, scale


def dequantize_b(mag_codes, phase_codes, scale, bits_mag, bits_phase, shape=None):
    mag = uniform_dequantize(mag_codes, 0.0, 1.0, bits_mag)
    out = scale * mag * np.exp(1j * phase_dequantize(phase_codes, bits_phase))
    return out.reshape(shape) if shape is not None else out


def quantize_v(values, bits, scheme=MU_LAW, mu=255.0):
    """Returns ``(codes, (v_min, v_max))``."""
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ConfigError("codeword contains non-finite values")
    if v.size == 0:
        return np.zeros(0, dtype=np.uint32), (0.0, 0.0)
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        return np.zeros(v.shape, dtype=np.uint32), (lo, hi)
    if scheme == UNIFORM:
        return uniform_quantize(v, lo, hi, bits), (lo, hi)
    x_max = max(abs(lo), abs(hi))
    return uniform_quantize(mu_compand(v / x_max, mu), -1.0, 1.0, bits), (lo, hi)


def dequantize_v(codes, v_range, bits, scheme=MU_LAW, mu=255.0):
    lo, hi = v_range
    codes = np.asarray(codes)
    if not hi > lo:
        return np.full(codes.shape, float(lo))
    if scheme == UNIFORM:
        return uniform_dequantize(codes, lo, hi, bits)
    x_max = max(abs(lo), abs(hi))
    return x_max * mu_expand(uniform_dequantize(codes, -1.0, 1.0, bits), mu)


@dataclass
class QuantizedCodewords:
    a_mag: np.ndarray
    a_phase: np.ndarray
    b_mag: np.ndarray
    b_phase: np.ndarray
    v_codes: np.ndarray
    spec: QuantSpec
    a_bias: complex = 0j
    a_mag_range: tuple = (0.0, 0.0)
    b_scale: float = 1.0
    v_range: tuple = (0.0, 0.0)

    @property
    def r_f(self):
        return len(self.a_mag)

    @property
    def l_t(self):
        return len(self.v_codes)


def quantize_all(a_diag, b, v, spec):
    spec.validate()
    am, ap, bias, mrange = quantize_a(a_diag, spec.a_bits_mag, spec.a_bits_phase)
    bm, bp, scale = quantize_b(b, spec.b_bits_mag, spec.b_bits_phase)
    vc, vrange = quantize_v(v, spec.v_bits, spec.v_scheme, spec.mu)
    return QuantizedCodewords(am, ap, bm, bp, vc, spec, bias, mrange, scale, vrange)


def dequantize_ab(q):
    s = q.spec
    a = dequantize_a(q.a_mag, q.a_phase, q.a_bias, q.a_mag_range, s.a_bits_mag, s.a_bits_phase)
    b = dequantize_b(q.b_mag, q.b_phase, q.b_scale, s.b_bits_mag, s.b_bits_phase, shape=(q.r_f, 2))
    return a, b


def dequantize_all(q):
    a, b = dequantize_ab(q)
    v = dequantize_v(q.v_codes, q.v_range, q.spec.v_bits, q.spec.v_scheme, q.spec.mu)
    return a, b, v


# -- sensitivity ------------------------------------------------------------------

def gradient_g1(c4, delta_v_y):
    """``G1 = (C4^H C4 dV^H)^T`` and its Frobenius norm.

    ``delta_v_y`` is ``(2N, r_f)``.  ``G1`` is the Wirtinger derivative of
    ``||C4 (V + dV)^H - C4 V^H||_F^2`` with respect to ``dV``; the real
    gradient has twice its norm.
    """
    c4 = np.asarray(c4)
    g1 = (c4.conj().T @ c4 @ np.asarray(delta_v_y).conj().T).T
    return g1, float(np.linalg.norm(g1))


def gradient_g2(c4, delta_c4, v_y):
    return (np.asarray(c4).conj().T @ np.asarray(delta_c4) @ np.asarray(v_y).conj().T).T


def hessian_sensitivity(c4_hat, v_y_hat, n_samples):
    """Frobenius norms of the Hessians of ``||dH_s||^2`` in ``dC4`` and ``dV_Y``.

    Uses ``||A kron I_n||_F^2 = n ||A||_F^2`` on the block-diagonal closed
    forms.  Returns ``(norm_dc4, norm_dvy, norm_dvy > norm_dc4)``.
    """
    c4_hat = np.asarray(c4_hat)
    v_y_hat = np.asarray(v_y_hat)
    n_tx = c4_hat.shape[0]
    gv = v_y_hat.conj().T @ v_y_hat
    gc = c4_hat.conj().T @ c4_hat
    h_c = np.sqrt(2 * n_tx) * np.linalg.norm(gv)
    h_v = np.sqrt(2 * 2 * n_samples) * np.linalg.norm(gc)
    return float(h_c), float(h_v), bool(h_v > h_c)


def subspace_after_quantization(a_diag, b, freqs, spec):
    """``V_Y`` rebuilt from ``(a, B)`` quantized with ``spec``; shape ``(2N, r_f)``."""
    am, ap, bias, mrange = quantize_a(a_diag, spec.a_bits_mag, spec.a_bits_phase)
    bm, bp, scale = quantize_b(b, spec.b_bits_mag, spec.b_bits_phase)
    a_hat = dequantize_a(am, ap, bias, mrange, spec.a_bits_mag, spec.a_bits_phase)
    b_hat = dequantize_b(bm, bp, scale, spec.b_bits_mag, spec.b_bits_phase, shape=np.shape(b))
    _, _, vh = normalized_svd(gram_from_poles(a_hat, b_hat, freqs).y)
    return vh.conj().T


@dataclass
class SensitivityReport:
    g1_norm: float
    g_norm_bound: float
    flagged: bool
    iterations: int
    final_spec: QuantSpec
    initial_g1_norm: float = float("nan")
    saturated: bool = False
    history: list = field(default_factory=list)


def g1_norm_at(c4, a_diag, b, freqs, spec, v_y=None):
    if v_y is None:
        _, _, vh = normalized_svd(gram_from_poles(a_diag, b, freqs).y)
        v_y = vh.conj().T
    v_hat = subspace_after_quantization(a_diag, b, freqs, spec)
    return gradient_g1(c4, v_hat - v_y)[1]


def robust_allocate(c4, a_diag, b, freqs, eps, spec0, delta_bits=(2, 2), delta_c4=None):
    """Raise the pole/B bit widths until ``||G1||_F < eps`` or every width
    reaches ``MAX_BITS``.  Saturation is reported, not raised."""
    if not eps > 0:
        raise ConfigError(f"eps must be > 0, got {eps}")
    spec = spec0.validate()
    d_mag, d_phase = delta_bits
    _, _, vh = normalized_svd(gram_from_poles(a_diag, b, freqs).y)
    v_y = vh.conj().T
    g1 = g1_norm_at(c4, a_diag, b, freqs, spec, v_y)
    history = [g1]
    iterations = 0
    saturated = False
    while g1 >= eps:
        nxt = spec.bumped(d_mag, d_phase)
        if nxt == spec:
            saturated = True
            break
        spec = nxt
        iterations += 1
        g1 = g1_norm_at(c4, a_diag, b, freqs, spec, v_y)
        history.append(g1)
    g2 = 0.0
    if delta_c4 is not None:
        g2 = float(np.linalg.norm(gradient_g2(c4, delta_c4, v_y)))
    return SensitivityReport(g1_norm=g1, g_norm_bound=g1 + g2, flagged=bool(g1 >= eps),
                             iterations=iterations, final_spec=spec, initial_g1_norm=history[0],
                             saturated=saturated, history=history)
