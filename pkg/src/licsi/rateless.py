"""Rateless auto-encoder for the transformed spatial basis.

The encoder maps the flattened real representation of ``C5`` to an
``M``-entry codeword.  Training masks the codeword to random prefix lengths
drawn from ``n`` disjoint intervals and minimises a weighted sum of the
resulting reconstruction errors, which pushes the important information
to the front.  Any prefix can then be zero-padded and decoded.

Everything is plain numpy with hand-written backprop and Adam.
"""
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, TrainingError, UntrainedError

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (25.0, 20.0, 10.0, 5.0, 1.0, 1.0, 1.0)
LEAKY_SLOPE = 0.1
CODEC_MAGIC = b"LICSIC01"
CODEC_VERSION = 1


def default_intervals(m, n):
    """``n`` contiguous equal-width intervals ending at ``m`` and starting
    just above ``m // 8``."""
    start = m // 8 + 1
    width = (m - start + 1) // n
    if width < 1:
        raise ConfigError(f"cannot fit {n} intervals below M={m}")
    start = m - n * width + 1
    return [(start + i * width, start + (i + 1) * width - 1) for i in range(n)]


def full_scale_intervals():
    """Seven intervals of width 256 starting at 256 (codeword length 4096)."""
    return [(256 + 256 * i, 511 + 256 * i) for i in range(7)]


def default_weights(n):
    w = list(DEFAULT_WEIGHTS[:n])
    return tuple(w + [1.0] * (n - len(w)))


@dataclass
class CodecConfig:
    input_dim: int
    m: int
    intervals: list = None
    weights: tuple = None
    hidden_dims: tuple = None
    epochs: int = 60
    batch_size: int = 64
    lr_max: float = 3e-3
    lr_min: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.intervals is None:
            self.intervals = default_intervals(self.m, 4)
        self.intervals = [tuple(int(x) for x in iv) for iv in self.intervals]
        if self.weights is None:
            self.weights = default_weights(len(self.intervals))
        self.weights = tuple(float(w) for w in self.weights)
        if self.hidden_dims is None:
            self.hidden_dims = ()
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)

    @property
    def n_intervals(self):
        return len(self.intervals)

    def validate(self):
        if self.input_dim < 1 or self.m < 1:
            raise ConfigError("input_dim and m must be positive")
        if not self.intervals:
            raise ConfigError("need at least one mask interval")
        widths = {hi - lo for lo, hi in self.intervals}
        if len(widths) != 1:
            raise ConfigError(f"mask intervals must have equal length, got widths {sorted(widths)}")
        prev_hi = 0
        for lo, hi in self.intervals:
            if lo < 1 or hi < lo:
                raise ConfigError(f"bad interval ({lo}, {hi})")
            if lo <= prev_hi:
                raise ConfigError("mask intervals must be increasing and non-overlapping")
            prev_hi = hi
        if prev_hi > self.m:
            raise ConfigError(f"last interval ends at {prev_hi} > M={self.m}")
        if len(self.weights) != len(self.intervals) or min(self.weights) <= 0:
            raise ConfigError("need one positive weight per interval")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        return self


# -- layout ---------------------------------------------------------------------

def flatten(c5):
    """Complex matrix -> real vector, real parts at even offsets."""
    c5 = np.asarray(c5)
    return np.stack([c5.real, c5.imag], axis=-1).reshape(c5.shape[:-2] + (2 * c5.shape[-2] * c5.shape[-1],))


def unflatten(v, shape):
    v = np.asarray(v, dtype=float)
    n_tx, r_f = shape
    if v.shape[-1] != 2 * n_tx * r_f:
        raise DimensionError(f"vector length {v.shape[-1]} does not match 2*{n_tx}*{r_f}")
    pairs = v.reshape(v.shape[:-1] + (n_tx, r_f, 2))
    return pairs[..., 0] + 1j * pairs[..., 1]


@dataclass
class Codeword:
    values: np.ndarray
    full_length: int

    @property
    def length(self):
        return len(self.values)


# -- network ----------------------------------------------------------------------

def _leaky(x):
    return np.where(x > 0, x, LEAKY_SLOPE * x)


def _leaky_grad(x):
    return np.where(x > 0, 1.0, LEAKY_SLOPE)


def decoder_shapes(cfg):
    """Affine path ``M -> input_dim`` followed by the residual branch
    ``M -> hidden... -> input_dim`` (absent when ``hidden_dims`` is empty)."""
    shapes = [(cfg.m, cfg.input_dim), (cfg.input_dim,)]
    if cfg.hidden_dims:
        sizes = [cfg.m, *cfg.hidden_dims, cfg.input_dim]
        for a, b in zip(sizes[:-1], sizes[1:]):
            shapes += [(a, b), (b,)]
    return shapes


def init_params(cfg, rng):
    """Encoder is a single affine map.  The decoder output is an affine map
    of the codeword plus a branch with ``hidden_dims`` leaky layers; the
    branch output layer starts small so training begins near the affine
    solution."""
    enc = [rng.standard_normal((cfg.input_dim, cfg.m)) / np.sqrt(cfg.input_dim), np.zeros(cfg.m)]
    dec = []
    shapes = decoder_shapes(cfg)
    for k in range(0, len(shapes), 2):
        n_in, n_out = shapes[k]
        scale = 0.1 if k == len(shapes) - 2 and k > 0 else 1.0
        dec += [scale * rng.standard_normal((n_in, n_out)) / np.sqrt(n_in), np.zeros(n_out)]
    return enc, dec


def encode_batch(enc, x):
    return x @ enc[0] + enc[1]


def decode_batch(dec, z, cache=None):
    out = z @ dec[0] + dec[1]
    h = z
    n_branch = len(dec) // 2 - 1
    for k in range(n_branch):
        pre = h @ dec[2 * k + 2] + dec[2 * k + 3]
        if cache is not None:
            cache.append((h, pre))
        h = _leaky(pre) if k < n_branch - 1 else pre
    if n_branch:
        out = out + h
    if cache is not None:
        cache.insert(0, z)
    return out


def _decode_backward(dec, cache, g_out):
    """Backprop ``g_out`` (gradient w.r.t. decoder output).  Returns
    (parameter grads, gradient w.r.t. decoder input)."""
    z = cache[0]
    grads = [None] * len(dec)
    grads[0] = z.T @ g_out
    grads[1] = g_out.sum(axis=0)
    gz = g_out @ dec[0].T
    g = g_out
    n_branch = len(dec) // 2 - 1
    for k in reversed(range(n_branch)):
        h_in, pre = cache[k + 1]
        if k < n_branch - 1:
            g = g * _leaky_grad(pre)
        grads[2 * k + 2] = h_in.T @ g
        grads[2 * k + 3] = g.sum(axis=0)
        g = g @ dec[2 * k + 2].T
    if n_branch:
        gz = gz + g
    return grads, gz


def prefix_mask(m, length):
    mask = np.zeros(m)
    mask[:length] = 1.0
    return mask


def loss_and_grad(enc, dec, x, lengths, weights):
    """Weighted multi-prefix loss ``sum_i w_i mean_b ||x - dec(enc(x) * e_{l_i})||^2``
    and its gradient with respect to every parameter."""
    bsz = x.shape[0]
    z = encode_batch(enc, x)
    m = z.shape[1]
    total = 0.0
    dec_grads = [np.zeros_like(p) for p in dec]
    gz = np.zeros_like(z)
    for l, w in zip(lengths, weights):
        mask = prefix_mask(m, l)
        cache = []
        xh = decode_batch(dec, z * mask, cache)
        r = xh - x
        total += w * np.sum(r * r) / bsz
        g_out = (2.0 * w / bsz) * r
        gp, gin = _decode_backward(dec, cache, g_out)
        for k, g in enumerate(gp):
            dec_grads[k] += g
        gz += gin * mask
    enc_grads = [x.T @ gz, gz.sum(axis=0)]
    return total, enc_grads, dec_grads


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.b1, self.b2, self.eps = beta1, beta2, eps
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def cosine_lr(step, total, lr_max, lr_min):
    if total <= 1:
        return lr_max
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / (total - 1)))


@dataclass
class RatelessCodec:
    config: CodecConfig
    encoder_params: list
    decoder_params: list
    norm: float = 1.0
    trained: bool = False
    history: list = field(default_factory=list)

    @classmethod
    def initialize(cls, cfg, norm=1.0):
        cfg.validate()
        enc, dec = init_params(cfg, np.random.default_rng(cfg.seed))
        return cls(cfg, enc, dec, norm=norm)

    @property
    def m(self):
        return self.config.m

    @property
    def input_dim(self):
        return self.config.input_dim

    def _require_trained(self):
        if not self.trained:
            raise UntrainedError("codec has not been trained")

    def encode_full(self, x_real):
        """Full ``M``-entry codewords for flattened inputs ``(..., input_dim)``."""
        return encode_batch(self.encoder_params, np.asarray(x_real) / self.norm)

    def decode_padded(self, z):
        return decode_batch(self.decoder_params, np.asarray(z, dtype=float)) * self.norm

    def reconstruct(self, c5_batch, length):
        """Decode the ``length``-prefix for a stack of ``C5`` matrices."""
        c5_batch = np.asarray(c5_batch)
        z = self.encode_full(flatten(c5_batch)) * prefix_mask(self.m, length)
        return unflatten(self.decode_padded(z), c5_batch.shape[-2:])


def identity_codec(n_tx, r_f):
    """Trained-flagged codec with ``M = input_dim`` whose encoder and decoder
    are identities; isolates the LI + MOR chain from spatial compression."""
    d = 2 * n_tx * r_f
    cfg = CodecConfig(input_dim=d, m=d, intervals=[(d, d)], weights=(1.0,), hidden_dims=())
    return RatelessCodec(cfg, [np.eye(d), np.zeros(d)], [np.eye(d), np.zeros(d)], trained=True)


def encode(codec, c5, l_t):
    codec._require_trained()
    if not 1 <= l_t <= codec.m:
        raise ConfigError(f"l_t={l_t} outside [1, {codec.m}]")
    x = flatten(c5)
    if x.shape[-1] != codec.input_dim:
        raise DimensionError(f"C5 flattens to {x.shape[-1]} values, codec expects {codec.input_dim}")
    z = codec.encode_full(x)
    return Codeword(z[:l_t].copy(), codec.m)


def decode(codec, cw, shape):
    """Zero-pad ``cw`` to ``M`` entries, decode, and reshape to ``shape``
    ``(n_tx, r_f)``."""
    codec._require_trained()
    values = np.asarray(cw.values if isinstance(cw, Codeword) else cw, dtype=float)
    if len(values) > codec.m:
        raise ConfigError(f"codeword of length {len(values)} exceeds M={codec.m}")
    z = np.zeros(codec.m)
    z[:len(values)] = values
    return unflatten(codec.decode_padded(z), shape)


def masked_loss(codec, batch, l):
    """Mean over the batch of ``||C5 - dec(enc(C5) * e_l)||_F^2``."""
    if not 1 <= l <= codec.m:
        raise ConfigError(f"l={l} outside [1, {codec.m}]")
    batch = np.asarray(batch)
    rec = codec.reconstruct(batch, l)
    return float(np.mean(np.sum(np.abs(rec - batch) ** 2, axis=(-2, -1))))


def train(dataset, cfg, progress=None):
    """Train a codec on a stack of ``C5`` matrices ``(K, n_tx, r_f)``.

    Per batch: one prefix length per interval, one Adam step on the
    weighted loss, cosine-annealed step size.
    """
    cfg.validate()
    x = flatten(np.asarray(dataset))
    if x.ndim != 2 or len(x) == 0:
        raise ConfigError("training set must be a non-empty stack of matrices")
    if x.shape[1] != cfg.input_dim:
        raise DimensionError(f"training inputs have {x.shape[1]} values, config says {cfg.input_dim}")
    norm = float(np.sqrt(np.mean(x ** 2))) or 1.0
    codec = RatelessCodec.initialize(cfg, norm=norm)
    xn = x / norm
    rng = np.random.default_rng(cfg.seed + 1)
    params = codec.encoder_params + codec.decoder_params
    n_enc = len(codec.encoder_params)
    opt = Adam(params)
    n_batches = math.ceil(len(xn) / cfg.batch_size)
    total_steps = n_batches * cfg.epochs
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(xn))
        running = 0.0
        for b in range(n_batches):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            lengths = [int(rng.integers(lo, hi + 1)) for lo, hi in cfg.intervals]
            with np.errstate(over="ignore", invalid="ignore"):
                loss, ge, gd = loss_and_grad(codec.encoder_params, codec.decoder_params, xn[idx],
                                             lengths, cfg.weights)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite in epoch {epoch}")
            opt.step(params, ge + gd, cosine_lr(step, total_steps, cfg.lr_max, cfg.lr_min))
            step += 1
            running += loss * len(idx)
        codec.history.append(running / len(xn))
        if progress:
            progress(epoch, codec.history[-1])
        log.debug("epoch %d loss %.4g", epoch, codec.history[-1])
    codec.encoder_params = params[:n_enc]
    codec.decoder_params = params[n_enc:]
    codec.trained = True
    return codec


def spatial_cr(l_t, n_tx, r_f):
    """Spatial compression ratio ``l_t / (2 n_tx r_f)``."""
    return l_t / (2 * n_tx * r_f)


# -- codec files ---------------------------------------------------------------------

def codec_to_bytes(codec):
    cfg = codec.config
    out = bytearray(CODEC_MAGIC)
    out += struct.pack("<HIIH", CODEC_VERSION, cfg.input_dim, cfg.m, cfg.n_intervals)
    for lo, hi in cfg.intervals:
        out += struct.pack("<II", lo, hi)
    out += struct.pack("<H", len(cfg.hidden_dims))
    for h in cfg.hidden_dims:
        out += struct.pack("<I", h)
    out += struct.pack("<d", codec.norm)
    for p in codec.encoder_params + codec.decoder_params:
        out += np.ascontiguousarray(p, dtype="<f8").tobytes()
    return bytes(out)


def codec_from_bytes(buf):
    pos = len(CODEC_MAGIC)
    if buf[:pos] != CODEC_MAGIC:
        raise FormatError("bad codec magic", offset=0)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError("truncated codec header", offset=pos)
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, input_dim, m, n = take("<HIIH")
    if version != CODEC_VERSION:
        raise FormatError(f"unsupported codec version {version}", offset=8)
    intervals = [take("<II") for _ in range(n)]
    (n_hidden,) = take("<H")
    hidden = [take("<I")[0] for _ in range(n_hidden)]
    (norm,) = take("<d")
    try:
        cfg = CodecConfig(input_dim=input_dim, m=m, intervals=intervals, hidden_dims=hidden).validate()
    except ConfigError as exc:
        raise FormatError(f"inconsistent codec header: {exc}", offset=8) from None
    shapes = [(input_dim, m), (m,)] + decoder_shapes(cfg)
    params = []
    for shp in shapes:
        count = int(np.prod(shp))
        if pos + 8 * count > len(buf):
            raise FormatError("truncated codec parameters", offset=len(buf))
        params.append(np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shp).astype(float))
        pos += 8 * count
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes after codec parameters", offset=pos)
    if not (np.isfinite(norm) and norm > 0) or not all(np.all(np.isfinite(p)) for p in params):
        raise FormatError("codec contains non-finite values")
    return RatelessCodec(cfg, params[:2], params[2:], norm=norm, trained=True)


def save_codec(codec, path):
    with open(path, "wb") as fh:
        fh.write(codec_to_bytes(codec))


def load_codec(path):
    with open(path, "rb") as fh:
        return codec_from_bytes(fh.read())
