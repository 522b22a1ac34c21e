"""Synthetic wideband multipath channels and the on-disk dataset format.

A channel slice is the ``(2*n_tx, n_sub)`` matrix seen by one receive
antenna: rows ``0..n_tx-1`` hold the first polarization, rows
``n_tx..2*n_tx-1`` the second, columns are subcarriers ``1..n_sub``.
"""
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, SingularityError

DATASET_MAGIC = b"LICSID01"
DATASET_VERSION = 1
_DATASET_HEADER = struct.Struct("<HIHBIQ")


@dataclass(frozen=True)
class ChannelConfig:
    n_tx: int = 32
    n_sub: int = 256
    n_rx: int = 2
    n_paths: int = 6
    delay_spread: float = 30e-9
    subcarrier_spacing: float = 30e3
    seed: int = 0
    n_pol: int = 2

    def validate(self):
        if self.n_pol != 2:
            raise ConfigError(f"n_pol must be 2, got {self.n_pol}")
        if self.n_tx < 2:
            raise ConfigError(f"n_tx must be >= 2, got {self.n_tx}")
        if self.n_sub < 2:
            raise ConfigError(f"n_sub must be >= 2, got {self.n_sub}")
        if self.n_rx < 1:
            raise ConfigError(f"n_rx must be >= 1, got {self.n_rx}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        if not self.delay_spread > 0:
            raise ConfigError(f"delay_spread must be > 0, got {self.delay_spread}")
        if not self.subcarrier_spacing > 0:
            raise ConfigError("subcarrier_spacing must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        return self


@dataclass
class ChannelSlice:
    data: np.ndarray
    config: ChannelConfig = field(default_factory=ChannelConfig)

    @property
    def n_tx(self):
        return self.data.shape[0] // 2

    @property
    def n_sub(self):
        return self.data.shape[1]


@dataclass
class RationalGroundTruth:
    """Order-r rational response ``C diag(1/(f - poles)) B``.

    ``residues_b`` is ``(r, 2)`` and ``residues_c`` is ``(n_tx, r)``.
    """

    poles: np.ndarray
    residues_b: np.ndarray
    residues_c: np.ndarray

    @property
    def order(self):
        return len(self.poles)

    @classmethod
    def random(cls, order, n_tx, n_sub, rng, min_damping=2.0):
        """Draw a well-separated ground truth whose poles avoid the real axis.

        Poles sit over the band with imaginary parts between ``min_damping``
        and a quarter of the band, which gives visibly resonant but
        non-singular responses.  Lightly damped poles are the ones most
        sensitive to pole quantization.
        """
        re = rng.uniform(1, n_sub, order)
        im = rng.uniform(min_damping, 0.25 * n_sub, order) * rng.choice([-1.0, 1.0], order)
        poles = re + 1j * im
        b = (rng.standard_normal((order, 2)) + 1j * rng.standard_normal((order, 2))) / np.sqrt(2)
        c = (rng.standard_normal((n_tx, order)) + 1j * rng.standard_normal((n_tx, order))) / np.sqrt(2)
        # residue scale ~ |Im pole| keeps every term O(1) at its peak
        c = c * np.abs(im)[None, :]
        return cls(poles, b, c)


def slice_array(x):
    """Underlying array of a :class:`ChannelSlice`, or ``x`` as an array."""
    return x.data if isinstance(x, ChannelSlice) else np.asarray(x)


def steering_vector(n, angle):
    """Uniform linear array response with half-wavelength spacing."""
    return np.exp(-1j * np.pi * np.arange(n) * np.sin(angle))


def multipath_response(gains, delays, angles, n_tx, n_sub, subcarrier_spacing):
    """Channel slice for explicit path parameters.

    gains : (P, 2) complex, one gain per path and polarization
    delays : (P,) seconds
    angles : (P,) departure angles in radians
    """
    gains = np.atleast_2d(np.asarray(gains, dtype=complex))
    delays = np.atleast_1d(np.asarray(delays, dtype=float))
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if gains.shape != (len(delays), 2) or len(angles) != len(delays):
        raise DimensionError("gains must be (P, 2) with P delays and P angles")
    f = np.arange(1, n_sub + 1)
    steer = np.exp(-1j * np.pi * np.outer(np.arange(n_tx), np.sin(angles)))  # (n_tx, P)
    phase = np.exp(-2j * np.pi * subcarrier_spacing * np.outer(delays, f))  # (P, n_sub)
    out = np.empty((2 * n_tx, n_sub), dtype=complex)
    for pol in range(2):
        out[pol * n_tx:(pol + 1) * n_tx] = (steer * gains[:, pol][None, :]) @ phase
    return out


def _draw_paths(cfg, rng):
    P = cfg.n_paths
    delays = rng.uniform(0.0, 4.0 * cfg.delay_spread, P)
    power = np.exp(-delays / cfg.delay_spread)
    power /= power.sum()
    gains = (rng.standard_normal((P, 2)) + 1j * rng.standard_normal((P, 2))) * np.sqrt(power / 2)[:, None]
    angles = rng.uniform(-np.pi / 2, np.pi / 2, P)
    return gains, delays, angles


def synthesize_slice(cfg):
    """Random multipath slice for receive antenna 0, deterministic in ``cfg.seed``.

    Mean path power decays exponentially with delay and is normalised to
    unit total, so each entry has unit expected power.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    gains, delays, angles = _draw_paths(cfg, rng)
    data = multipath_response(gains, delays, angles, cfg.n_tx, cfg.n_sub, cfg.subcarrier_spacing)
    return ChannelSlice(data, cfg)


def synthesize_tensor(cfg):
    """Full ``(n_rx, 2*n_tx, n_sub)`` channel sharing one set of paths.

    Arrival angles are drawn after everything ``synthesize_slice`` draws,
    so ``synthesize_tensor(cfg)[0]`` equals ``synthesize_slice(cfg).data``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    gains, delays, angles = _draw_paths(cfg, rng)
    aoa = rng.uniform(-np.pi / 2, np.pi / 2, cfg.n_paths)
    out = np.empty((cfg.n_rx, 2 * cfg.n_tx, cfg.n_sub), dtype=complex)
    for r in range(cfg.n_rx):
        g = gains * np.exp(-1j * np.pi * r * np.sin(aoa))[:, None]
        out[r] = multipath_response(g, delays, angles, cfg.n_tx, cfg.n_sub, cfg.subcarrier_spacing)
    return out


def synthesize_dataset(cfg, count):
    """``count`` slices with seeds ``cfg.seed, cfg.seed + 1, ...``."""
    return [synthesize_slice(replace(cfg, seed=cfg.seed + k)) for k in range(count)]


def synthesize_rational(gt, freqs, config=None):
    """Evaluate a rational ground truth at ``freqs``; column k is ``vec`` of
    ``C diag(1/(f_k - poles)) B`` with polarization as the slow axis."""
    freqs = np.asarray(freqs, dtype=float)
    poles = np.asarray(gt.poles, dtype=complex)
    diff = freqs[:, None] - poles[None, :]
    bad = np.argwhere(diff == 0)
    if len(bad):
        raise SingularityError(
            f"frequency {freqs[bad[0, 0]]} coincides with pole {bad[0, 1]}",
            indices=[tuple(x) for x in bad])
    n_tx = gt.residues_c.shape[0]
    out = np.empty((2 * n_tx, len(freqs)), dtype=complex)
    inv = 1.0 / diff  # (F, r)
    for pol in range(2):
        out[pol * n_tx:(pol + 1) * n_tx] = gt.residues_c @ (inv * gt.residues_b[:, pol][None, :]).T
    if config is None:
        config = ChannelConfig(n_tx=n_tx, n_sub=len(freqs))
    return ChannelSlice(out, config)


# -- dataset files -----------------------------------------------------------

def save_dataset(slices, path, seed=None):
    """Write slices as ``LICSID01`` + header + little-endian complex128 payload."""
    slices = list(slices)
    if slices:
        n_tx, n_sub = slices[0].n_tx, slices[0].n_sub
        for s in slices:
            if s.data.shape != (2 * n_tx, n_sub):
                raise DimensionError("all slices in a dataset must share one shape")
        if seed is None:
            seed = slices[0].config.seed
    else:
        n_tx, n_sub = 0, 0
    seed = 0 if seed is None else int(seed)
    header = DATASET_MAGIC + _DATASET_HEADER.pack(DATASET_VERSION, len(slices), n_tx, 2, n_sub, seed)
    with open(path, "wb") as fh:
        fh.write(header)
        for s in slices:
            fh.write(np.ascontiguousarray(s.data, dtype="<c16").tobytes())


def read_dataset_bytes(buf):
    """Parse a dataset image; returns (array of shape (count, 2*n_tx, n_sub), header dict)."""
    hdr_len = len(DATASET_MAGIC) + _DATASET_HEADER.size
    if len(buf) < len(DATASET_MAGIC) or buf[:len(DATASET_MAGIC)] != DATASET_MAGIC:
        raise FormatError("bad dataset magic", offset=0)
    if len(buf) < hdr_len:
        raise FormatError("truncated dataset header", offset=len(buf))
    version, count, n_tx, n_pol, n_sub, seed = _DATASET_HEADER.unpack_from(buf, len(DATASET_MAGIC))
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}", offset=8)
    if n_pol != 2:
        raise FormatError(f"n_pol must be 2, got {n_pol}", offset=16)
    expected = hdr_len + count * 2 * n_tx * n_sub * 16
    if len(buf) != expected:
        raise FormatError(f"dataset body is {len(buf) - hdr_len} bytes, header implies "
                          f"{expected - hdr_len}", offset=min(len(buf), expected))
    arr = np.frombuffer(buf, dtype="<c16", offset=hdr_len).reshape(count, 2 * n_tx, n_sub)
    return arr.astype(complex), dict(version=version, count=count, n_tx=n_tx, n_sub=n_sub, seed=seed)


def load_dataset(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    arr, hdr = read_dataset_bytes(buf)
    return [ChannelSlice(arr[k], ChannelConfig(n_tx=max(hdr["n_tx"], 2), n_sub=max(hdr["n_sub"], 2),
                                               seed=hdr["seed"] + k))
            for k in range(hdr["count"])]
