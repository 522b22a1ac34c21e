"""End-to-end compression (UE side) and reconstruction (BS side), metrics,
and the sweep harness.

UE:  sample -> Loewner pencil -> order reduction -> basis change + DFT
     -> rateless encode -> (robust bit allocation) -> quantize -> payload
BS:  payload -> dequantize -> zero-pad + decode -> inverse transform
     -> evaluate the realization on every subcarrier
"""
import csv
import io
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from .channel import ChannelConfig, ChannelSlice, slice_array
from .errors import ConfigError, DimensionError, FormatError, LicsiError
from .loewner import assemble_pencil, build_sample_set, sample_frequencies
from .mor import ReducedRealization, realization_to_slice, reduce_order
from .payload import FeedbackPayload, deserialize, serialize
from .quant import (QuantSpec, dequantize_ab, dequantize_all, g1_norm_at, quantize_all,
                    robust_allocate)
from .rateless import decode, encode, spatial_cr
from .transform import build_gram, forward_transform, inverse_from_basis, receiver_basis

NMSE_FLOOR_DB = -300.0


@dataclass(frozen=True)
class Profile:
    n_tx: int
    n_sub: int
    n_samples: int
    stride: int
    r_f: int
    m: int
    n_intervals: int


DESK = Profile(n_tx=32, n_sub=256, n_samples=64, stride=4, r_f=8, m=256, n_intervals=4)
FULL = Profile(n_tx=128, n_sub=3300, n_samples=275, stride=12, r_f=32, m=4096, n_intervals=7)


@dataclass
class CompressionParams:
    n_samples: int = DESK.n_samples
    stride: int = DESK.stride
    r_f: int = DESK.r_f
    l_t: int = None                 # None: full codeword
    spec: QuantSpec = field(default_factory=QuantSpec)
    eps: float = None               # set to run robust bit allocation
    delta_bits: tuple = (2, 2)


@dataclass
class SliceAnalysis:
    """UE-side intermediates for one slice."""
    freqs: np.ndarray
    realization: ReducedRealization
    basis: object          # TransformedBasis
    diagnostics: object    # ReductionDiagnostics


@dataclass
class MetricsReport:
    nmse_db: float
    nmse_linear: float
    overhead_bits: float
    overhead_complex: float
    cr_spatial: float
    cr_overall: float
    se_bits_per_hz: float = None


@contextmanager
def stage(name):
    try:
        yield
    except LicsiError as exc:
        if exc.stage is None:
            exc.with_stage(name)
        raise


def analyze_slice(slice_, n_samples, stride, r_f):
    with stage("sample"):
        s = build_sample_set(slice_, n_samples, stride)
    with stage("pencil"):
        pencil = assemble_pencil(s)
    with stage("reduce"):
        r, diag = reduce_order(pencil, r_f)
    freqs = sample_frequencies(n_samples, stride)
    with stage("transform"):
        basis = forward_transform(r.c, build_gram(r, freqs))
    return SliceAnalysis(freqs, r, basis, diag)


def _check_codec(codec, n_tx, r_f, exc=DimensionError):
    if codec.input_dim != 2 * n_tx * r_f:
        raise exc(f"codec expects input_dim {codec.input_dim}, slice gives 2*{n_tx}*{r_f}")


def compress_detailed(slice_, codec, params):
    """Like :func:`compress_slice` but also returns the analysis and the
    robust-allocation report (``None`` when not requested)."""
    data = slice_array(slice_)
    n_tx = data.shape[0] // 2
    with stage("encode"):
        _check_codec(codec, n_tx, params.r_f)
    ana = analyze_slice(data, params.n_samples, params.stride, params.r_f)
    r = ana.realization
    l_t = codec.m if params.l_t is None else params.l_t
    with stage("encode"):
        cw = encode(codec, ana.basis.c5, l_t)
    spec, report = params.spec, None
    with stage("allocate"):
        if params.eps is not None:
            report = robust_allocate(ana.basis.c4, r.a_diag, r.b, ana.freqs, params.eps, spec,
                                     params.delta_bits)
            spec = report.final_spec
    with stage("quantize"):
        q = quantize_all(r.a_diag, r.b, cw.values, spec)
        # the receiver rejects payloads whose poles give a rank-deficient
        # basis, so refuse to emit one
        a_hat, b_hat = dequantize_ab(q)
        receiver_basis(a_hat, b_hat, ana.freqs)
    payload = FeedbackPayload(n_tx, params.r_f, params.n_samples, params.stride, q)
    return payload, ana, report


def compress_slice(slice_, codec, params):
    return compress_detailed(slice_, codec, params)[0]


def reconstruct_slice(a_hat, b_hat, c5_hat, freqs, n_sub, basis_error=None):
    """BS-side tail of the chain from dequantized values."""
    kw = {} if basis_error is None else {"exc": basis_error}
    with stage("inverse"):
        u, s = receiver_basis(a_hat, b_hat, freqs, **kw)
        c3 = inverse_from_basis(c5_hat, u, s)
    with stage("evaluate"):
        return realization_to_slice(ReducedRealization(a_hat, b_hat, c3), n_sub)


def decompress_slice(payload, codec, n_sub=None):
    if isinstance(payload, (bytes, bytearray, memoryview)):
        payload = deserialize(bytes(payload))
    with stage("parse"):
        _check_codec(codec, payload.n_tx, payload.r_f, exc=FormatError)
        if payload.l_t > codec.m:
            raise FormatError(f"payload carries l_t={payload.l_t} > codec M={codec.m}")
    n_sub = payload.n_sub if n_sub is None else int(n_sub)
    with stage("dequantize"):
        a_hat, b_hat, v_hat = dequantize_all(payload.codes)
    with stage("decode"):
        c5_hat = decode(codec, v_hat, (payload.n_tx, payload.r_f))
    freqs = sample_frequencies(payload.n_samples, payload.stride)
    h = reconstruct_slice(a_hat, b_hat, c5_hat, freqs, n_sub, basis_error=FormatError)
    return ChannelSlice(h, ChannelConfig(n_tx=payload.n_tx, n_sub=n_sub))


def roundtrip(slice_, codec, params, n_sub=None):
    """Compress, serialize, parse and decompress; returns ``(slice, payload)``."""
    payload = compress_slice(slice_, codec, params)
    rec = decompress_slice(deserialize(serialize(payload)), codec, n_sub)
    return rec, payload


# -- metrics ------------------------------------------------------------------------

def _as_data(x):
    if isinstance(x, ChannelSlice):
        return x.data
    if isinstance(x, (list, tuple)):
        return np.stack([_as_data(s) for s in x])
    return np.asarray(x)


def to_db(x):
    return NMSE_FLOOR_DB if x <= 10 ** (NMSE_FLOOR_DB / 10) else 10 * math.log10(x)


def nmse(h_true, h_hat):
    """Mean over slices of ``||H_hat - H||^2 / ||H||^2``; returns
    ``(linear, dB)``.  A 2-D input is one slice, a 3-D input a stack."""
    t, e = _as_data(h_true), _as_data(h_hat)
    if t.shape != e.shape:
        raise DimensionError(f"shape mismatch {t.shape} vs {e.shape}")
    if t.ndim == 2:
        t, e = t[None], e[None]
    ref = np.sum(np.abs(t) ** 2, axis=(-2, -1))
    if np.any(ref == 0):
        raise ConfigError("true channel has zero norm")
    lin = float(np.mean(np.sum(np.abs(e - t) ** 2, axis=(-2, -1)) / ref))
    return lin, to_db(lin)


def spectral_efficiency(h_true_full, h_hat_full, n_layers, snr_db, interference="diagonal"):
    """Average over subbands of the per-layer rates with true-channel SVD
    combiners and reconstructed-channel SVD precoders, equal power per layer.

    ``interference="diagonal"`` sums ``|u_j^H H v_j|^2`` over the other layers;
    ``"cross"`` sums the leakage ``|u_l^H H v_j|^2`` into layer ``l``.
    """
    h = np.asarray(h_true_full)
    g = np.asarray(h_hat_full)
    if h.shape != g.shape or h.ndim != 3:
        raise DimensionError("expected two (N_r, 2N_t, N_f) tensors of equal shape")
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
        raise ConfigError("channel tensors must be finite")
    n_r, n_t2, _ = h.shape
    if not 1 <= n_layers <= min(n_r, n_t2):
        raise ConfigError(f"R={n_layers} exceeds min(N_r, 2N_t)={min(n_r, n_t2)}")
    if interference not in ("diagonal", "cross"):
        raise ConfigError(f"unknown interference model {interference!r}")
    R = n_layers
    hf = np.moveaxis(h, -1, 0)
    u, _, _ = np.linalg.svd(hf)
    _, _, vh_hat = np.linalg.svd(np.moveaxis(g, -1, 0))
    u = u[:, :, :R]                               # (F, N_r, R)
    v = vh_hat[:, :R, :].conj().transpose(0, 2, 1)  # (F, 2N_t, R)
    gain = np.abs(np.einsum("fri,frt,ftj->fij", u.conj(), hf, v)) ** 2  # (F, R, R)
    noise = R * 10 ** (-snr_db / 10) * np.sum(np.abs(u) ** 2, axis=1)  # (F, R)
    sig = np.einsum("fii->fi", gain)
    if interference == "diagonal":
        interf = sig.sum(axis=1, keepdims=True) - sig
    else:
        interf = gain.sum(axis=2) - sig
    rate = np.log2(1 + sig / (interf + noise))
    return float(np.mean(np.sum(rate, axis=1)))


def overhead_complex(l_t, r_f):
    """Feedback size in complex numbers: ``N_t r_f CR_s + 3 r_f = l_t/2 + 3 r_f``."""
    return l_t / 2 + 3 * r_f


def overall_cr(d, n_tx, n_sub):
    return d / (2 * n_tx * n_sub)


def metrics_for(payload, n_sub, nmse_lin, se=None):
    d = overhead_complex(payload.l_t, payload.r_f)
    return MetricsReport(
        nmse_db=to_db(nmse_lin), nmse_linear=nmse_lin, overhead_bits=payload.total_bits,
        overhead_complex=d, cr_spatial=spatial_cr(payload.l_t, payload.n_tx, payload.r_f),
        cr_overall=overall_cr(d, payload.n_tx, n_sub), se_bits_per_hz=se)


def calibrate_eps(slices, params, quantile=95.0):
    """``quantile``-th percentile of the pre-adjustment ``||G1||_F`` at
    ``params.spec`` over ``slices``."""
    vals = []
    for sl in slices:
        ana = analyze_slice(sl, params.n_samples, params.stride, params.r_f)
        r = ana.realization
        vals.append(g1_norm_at(ana.basis.c4, r.a_diag, r.b, ana.freqs, params.spec))
    if not vals:
        raise ConfigError("calibration needs at least one slice")
    return float(np.percentile(vals, quantile))


# -- sweep ----------------------------------------------------------------------------

@dataclass
class SweepGrid:
    l_t: list
    r_f: list
    specs: dict                       # label -> QuantSpec
    n_samples: int = DESK.n_samples
    stride: int = DESK.stride
    eps: float = None
    n_rx: int = 1                     # consecutive slices per SE tensor
    n_layers: int = 1
    snr_db: float = None              # None disables SE


SWEEP_FIELDS = ["r_f", "l_t", "spec", "n_slices"] + list(MetricsReport.__dataclass_fields__)


def evaluate_sweep(dataset, codecs, grid):
    """One :class:`MetricsReport` per grid cell, aggregated over ``dataset``.

    ``codecs`` maps ``r_f`` to a trained codec (a bare codec is used for
    every ``r_f``).  Returns a list of row dicts in grid order.
    """
    if not (grid.l_t and grid.r_f and grid.specs):
        raise ConfigError("sweep grid is empty")
    slices = [slice_array(s) for s in dataset]
    if not slices:
        raise ConfigError("sweep needs at least one slice")
    rows = []
    for r_f in grid.r_f:
        codec = codecs[r_f] if isinstance(codecs, dict) else codecs
        for l_t in grid.l_t:
            for label, spec in grid.specs.items():
                params = CompressionParams(grid.n_samples, grid.stride, r_f, l_t, spec, grid.eps)
                recs, bits, ratios = [], [], []
                payload = None
                for sl in slices:
                    payload = compress_slice(sl, codec, params)
                    rec = decompress_slice(deserialize(serialize(payload)), codec, sl.shape[1]).data
                    recs.append(rec)
                    bits.append(payload.total_bits)
                    ratios.append(nmse(sl, rec)[0])
                se = None
                if grid.snr_db is not None:
                    k = len(slices) // grid.n_rx * grid.n_rx
                    ses = [spectral_efficiency(np.stack(slices[i:i + grid.n_rx]),
                                               np.stack(recs[i:i + grid.n_rx]),
                                               grid.n_layers, grid.snr_db)
                           for i in range(0, k, grid.n_rx)]
                    se = float(np.mean(ses)) if ses else None
                rep = metrics_for(payload, slices[0].shape[1], float(np.mean(ratios)), se)
                rep.overhead_bits = float(np.mean(bits))
                rows.append(dict(r_f=r_f, l_t=l_t, spec=label, n_slices=len(slices), **asdict(rep)))
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row[k] is None else repr(row[k]) if isinstance(row[k], float) else row[k])
                    for k in SWEEP_FIELDS})
    return buf.getvalue()
