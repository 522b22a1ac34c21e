"""Bit-exact feedback payload: fixed 90-byte header followed by the
bit-packed quantization codes.

Layout (little-endian)::

    magic "LICSIP01" | u16 version, N_t, r_f, N, stride, l_t
    | u8 aMag, aPh, bMag, bPh, v bits | u8 v_scheme
    | f64 a_bias.re, a_bias.im, a_mag_min, a_mag_max, b_scale, v_min, v_max, mu
    | A mag | A phase | B mag | B phase | v

Each body field is written MSB first and padded with zero bits to a byte
boundary.  Parsing is strict: anything that is not the canonical encoding
of a plausible payload raises :class:`FormatError`.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .quant import MAX_BITS, MU_LAW, UNIFORM, QuantizedCodewords, QuantSpec

MAGIC = b"LICSIP01"
VERSION = 1
_HEADER = struct.Struct("<8s6H5BB8d")
HEADER_BYTES = _HEADER.size  # 90
# Side-info magnitudes beyond this are treated as corruption.
SIDE_INFO_LIMIT = 1e100
MAX_SUBCARRIERS = 1 << 16


@dataclass
class FeedbackPayload:
    n_tx: int
    r_f: int
    n_samples: int
    stride: int
    codes: QuantizedCodewords
    version: int = VERSION

    @property
    def l_t(self):
        return self.codes.l_t

    @property
    def spec(self):
        return self.codes.spec

    @property
    def n_sub(self):
        """Default reconstruction grid: every subcarrier covered by the samples."""
        return self.n_samples * self.stride

    def field_layout(self):
        s = self.spec
        r = self.r_f
        return [(r, s.a_bits_mag), (r, s.a_bits_phase), (2 * r, s.b_bits_mag),
                (2 * r, s.b_bits_phase), (self.l_t, s.v_bits)]

    @property
    def header_bits(self):
        return 8 * HEADER_BYTES

    @property
    def body_bits(self):
        """Code bits, excluding padding."""
        return sum(n * b for n, b in self.field_layout())

    @property
    def padding_bits(self):
        return sum(-(n * b) % 8 for n, b in self.field_layout())

    @property
    def total_bits(self):
        return self.header_bits + self.body_bits

    @property
    def byte_length(self):
        return HEADER_BYTES + _body_bytes(self.field_layout())


def _body_bytes(layout):
    return sum((n * b + 7) // 8 for n, b in layout)


def pack_codes(codes, bits):
    """MSB-first packing of unsigned ``codes`` at ``bits`` each, zero padded."""
    codes = np.asarray(codes, dtype=np.uint32)
    if codes.size and int(codes.max()) >> bits:
        raise ValueError(f"code exceeds {bits} bits")
    shifts = np.arange(bits - 1, -1, -1, dtype=np.uint32)
    bitarr = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return np.packbits(bitarr.ravel()).tobytes()


def unpack_codes(buf, count, bits):
    """Inverse of :func:`pack_codes`; returns ``(codes, padding_is_zero)``."""
    raw = np.unpackbits(np.frombuffer(buf, dtype=np.uint8))
    used = count * bits
    bitarr = raw[:used].reshape(count, bits).astype(np.uint32)
    weights = (1 << np.arange(bits - 1, -1, -1)).astype(np.uint32)
    return bitarr @ weights, not raw[used:].any()


def serialize(p):
    q, s = p.codes, p.spec
    for name, val in (("N_t", p.n_tx), ("r_f", p.r_f), ("N", p.n_samples),
                      ("stride", p.stride), ("l_t", p.l_t)):
        if not 0 < val < 1 << 16:
            raise ValueError(f"{name}={val} does not fit the u16 header field")
    head = _HEADER.pack(
        MAGIC, p.version, p.n_tx, p.r_f, p.n_samples, p.stride, p.l_t,
        s.a_bits_mag, s.a_bits_phase, s.b_bits_mag, s.b_bits_phase, s.v_bits, s.v_scheme,
        q.a_bias.real, q.a_bias.imag, q.a_mag_range[0], q.a_mag_range[1], q.b_scale,
        q.v_range[0], q.v_range[1], s.mu)
    fields = [q.a_mag, q.a_phase, q.b_mag, q.b_phase, q.v_codes]
    body = b"".join(pack_codes(np.ravel(c), b) for c, (_, b) in zip(fields, p.field_layout()))
    return head + body


def _check_header(vals, offset):
    (magic, version, n_tx, r_f, n, stride, l_t, am, ap, bm, bp, vb, scheme,
     bias_re, bias_im, mag_lo, mag_hi, b_scale, v_lo, v_hi, mu) = vals
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=offset)
    if version != VERSION:
        raise FormatError(f"unsupported payload version {version}", offset=offset + 8)
    if min(n_tx, r_f, stride, l_t) < 1 or n < 2:
        raise FormatError("zero dimension in header", offset=offset + 10)
    if r_f >= 2 * n:
        raise FormatError(f"r_f={r_f} must be below 2N={2 * n}", offset=offset + 12)
    if n * stride > MAX_SUBCARRIERS:
        raise FormatError(f"sample grid {n}x{stride} exceeds {MAX_SUBCARRIERS} subcarriers",
                          offset=offset + 14)
    for i, b in enumerate((am, ap, bm, bp, vb)):
        if not 1 <= b <= MAX_BITS:
            raise FormatError(f"bit width {b} outside [1, {MAX_BITS}]", offset=offset + 20 + i)
    if scheme not in (UNIFORM, MU_LAW):
        raise FormatError(f"unknown v scheme {scheme}", offset=offset + 25)
    floats = (bias_re, bias_im, mag_lo, mag_hi, b_scale, v_lo, v_hi, mu)
    for i, x in enumerate(floats):
        if not (np.isfinite(x) and abs(x) <= SIDE_INFO_LIMIT):
            raise FormatError(f"side-info value {x!r} is not plausible", offset=offset + 26 + 8 * i)
    if not 0 <= mag_lo <= mag_hi:
        raise FormatError("pole magnitude range is invalid", offset=offset + 42)
    if not 1.0 / SIDE_INFO_LIMIT <= b_scale:
        raise FormatError("B scale is not positive", offset=offset + 58)
    if not v_lo <= v_hi:
        raise FormatError("codeword range is inverted", offset=offset + 66)
    if not mu >= 1.0 / SIDE_INFO_LIMIT:
        raise FormatError("mu must be positive", offset=offset + 82)


def parse(buf, offset=0):
    """Parse one payload starting at ``offset``.  Returns ``(payload, end)``."""
    buf = bytes(buf)
    if len(buf) - offset < HEADER_BYTES:
        raise FormatError(f"truncated header: {len(buf) - offset} of {HEADER_BYTES} bytes",
                          offset=len(buf))
    vals = _HEADER.unpack_from(buf, offset)
    _check_header(vals, offset)
    (_, version, n_tx, r_f, n, stride, l_t, am, ap, bm, bp, vb, scheme,
     bias_re, bias_im, mag_lo, mag_hi, b_scale, v_lo, v_hi, mu) = vals
    spec = QuantSpec(am, ap, bm, bp, vb, scheme, mu)
    layout = [(r_f, am), (r_f, ap), (2 * r_f, bm), (2 * r_f, bp), (l_t, vb)]
    pos = offset + HEADER_BYTES
    end = pos + _body_bytes(layout)
    if end > len(buf):
        raise FormatError(f"body truncated: need {end - pos} bytes, have {len(buf) - pos}",
                          offset=len(buf))
    fields = []
    for count, bits in layout:
        nbytes = (count * bits + 7) // 8
        codes, clean = unpack_codes(buf[pos:pos + nbytes], count, bits)
        if not clean:
            raise FormatError("non-zero padding bits", offset=pos + nbytes - 1)
        fields.append(codes)
        pos += nbytes
    q = QuantizedCodewords(fields[0], fields[1], fields[2], fields[3], fields[4], spec,
                           complex(bias_re, bias_im), (mag_lo, mag_hi), b_scale, (v_lo, v_hi))
    return FeedbackPayload(n_tx, r_f, n, stride, q, version), end


def deserialize(buf):
    """Parse exactly one payload; trailing bytes are an error."""
    p, end = parse(buf)
    if end != len(buf):
        raise FormatError(f"{len(buf) - end} trailing bytes after payload", offset=end)
    return p


def serialize_stream(payloads):
    return b"".join(serialize(p) for p in payloads)


def parse_stream(buf):
    out, pos = [], 0
    while pos < len(buf):
        p, pos = parse(buf, pos)
        out.append(p)
    return out
