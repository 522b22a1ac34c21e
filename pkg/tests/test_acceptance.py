"""Acceptance criteria A1-A9.  Each test records a one-line verdict that the
terminal summary prints as ``A# PASS/FAIL detail``."""
import time

import numpy as np
from scipy.stats import spearmanr

from licsi.channel import ChannelConfig, RationalGroundTruth, synthesize_dataset, synthesize_rational
from licsi.errors import FormatError, IllConditionedError
from licsi.loewner import assemble_pencil, build_sample_set, interpolation_defect
from licsi.mor import ReducedRealization, numerical_rank, reduce_order
from licsi.payload import FeedbackPayload, deserialize, serialize
from licsi.pipeline import (DESK, FULL, CompressionParams, analyze_slice, compress_detailed,
                            decompress_slice, nmse, overall_cr, overhead_complex, reconstruct_slice)
from licsi.quant import (MU_LAW, UNIFORM, QuantSpec, dequantize_a, dequantize_b, dequantize_v,
                         g1_norm_at, gradient_g1, hessian_sensitivity, mu_compand, mu_expand,
                         phase_dequantize, phase_distance, phase_quantize, quantize_a, quantize_all,
                         quantize_b, quantize_v, uniform_dequantize, uniform_quantize, uniform_step)
from licsi.transform import build_gram, dft_matrix, forward_transform

import oracles


def _crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _verdict(record_property, cid, ok, detail):
    record_property("criterion", cid)
    record_property("detail", detail)
    assert ok, f"{cid}: {detail}"


def test_a1_oracle_exact_recovery(record_property):
    t0 = time.perf_counter()
    worst, failures = -np.inf, 0
    for k in range(50):
        order = (4, 8)[k % 2]
        gt = RationalGroundTruth.random(order, DESK.n_tx, DESK.n_sub, np.random.default_rng(1000 + k))
        h = synthesize_rational(gt, np.arange(1, DESK.n_sub + 1)).data
        ana = analyze_slice(h, DESK.n_samples, DESK.stride, order)
        r = ana.realization
        rec = reconstruct_slice(r.a_diag, r.b, ana.basis.c5, ana.freqs, DESK.n_sub)
        db = nmse(h, rec)[1]
        worst = max(worst, db)
        failures += db >= -100
    dt = time.perf_counter() - t0
    _verdict(record_property, "A1", failures == 0 and dt < 5,
             f"worst NMSE {worst:.1f} dB over 50 channels, {failures} above -100 dB, {dt:.2f} s")


def test_a2_sample_point_interpolation(record_property):
    slices = synthesize_dataset(ChannelConfig(seed=2024), 100)
    worst, bad, errors = 0.0, 0, 0
    ranks = []
    for s in slices:
        P = assemble_pencil(build_sample_set(s, DESK.n_samples, DESK.stride))
        r_f = numerical_rank(P, 1e-8)
        ranks.append(r_f)
        try:
            r, _ = reduce_order(P, r_f)
        except IllConditionedError:
            errors += 1
            continue
        d = interpolation_defect(P, r).max()
        worst = max(worst, d)
        bad += d >= 1e-8
    _verdict(record_property, "A2", bad == 0 and errors == 0,
             f"max defect {worst:.2e}, {bad}/100 slices >= 1e-8, {errors} reduction failures, "
             f"ranks {min(ranks)}..{max(ranks)}")


def test_a3_transform_identities(record_property):
    rng = np.random.default_rng(3)
    worst = [0.0, 0.0, 0.0]
    for _ in range(1000):
        r_f, n_tx, n = int(rng.integers(1, 9)), int(rng.integers(2, 33)), 16
        freqs = 1.0 + 4 * np.arange(n)
        poles = rng.uniform(1, 64, r_f) + 1j * rng.uniform(2, 20, r_f) * rng.choice([-1, 1], r_f)
        real = ReducedRealization(poles, _crandn(rng, r_f, 2), _crandn(rng, n_tx, r_f))
        g = build_gram(real, freqs)
        t = forward_transform(real.c, g)
        d4 = _crandn(rng, n_tx, r_f) * 10 ** rng.uniform(-6, 0)
        dhs = d4 @ t.v_y_h
        ref = np.linalg.norm(d4) ** 2
        worst[0] = max(worst[0], abs(np.linalg.norm(dhs) ** 2 - ref) / ref)
        d3 = _crandn(rng, n_tx, r_f)
        a = np.linalg.norm(d3 @ g.y) ** 2
        b = np.trace(d3.conj().T @ d3 @ g.y @ g.y.conj().T).real
        worst[1] = max(worst[1], abs(a - b) / a)
        d5 = _crandn(rng, n_tx, r_f)
        worst[2] = max(worst[2], abs(np.linalg.norm(dft_matrix(n_tx).conj().T @ d5) ** 2
                                     - np.linalg.norm(d5) ** 2) / np.linalg.norm(d5) ** 2)
    _verdict(record_property, "A3", max(worst) < 1e-10,
             "max rel err: C4 isometry {:.1e}, trace {:.1e}, DFT {:.1e}".format(*worst))


def test_a4_gradient_hessian(record_property, desk_test_analysis):
    rng = np.random.default_rng(4)
    g_err = 0.0
    for _ in range(50):
        c4 = _crandn(rng, 4, 3)
        dv0 = _crandn(rng, 8, 3)
        n = dv0.size

        def J(x):
            dv = (x[:n] + 1j * x[n:]).reshape(dv0.shape)
            return np.linalg.norm(c4 @ dv.conj().T) ** 2

        g = oracles.real_gradient(J, np.concatenate([dv0.real.ravel(), dv0.imag.ravel()]))
        g_err = max(g_err, abs(2 * gradient_g1(c4, dv0)[1] - np.linalg.norm(g)) / np.linalg.norm(g))
    h_err = 0.0
    for r_f in (1, 2, 3):
        for trial in range(2):
            n_tx, n = 3, 2
            c4 = _crandn(rng, n_tx, r_f)
            v, _ = np.linalg.qr(_crandn(rng, 2 * n, r_f))
            h_c, h_v, _ = hessian_sensitivity(c4, v, n)

            def f_c(x, m=n_tx * r_f):
                d = (x[:m] + 1j * x[m:]).reshape(n_tx, r_f)
                return np.linalg.norm(d @ v.conj().T) ** 2

            def f_v(x, m=2 * n * r_f):
                d = (x[:m] + 1j * x[m:]).reshape(2 * n, r_f)
                return np.linalg.norm(c4 @ d.conj().T) ** 2

            ref_c = oracles.wirtinger_augmented_norm(oracles.real_hessian(f_c, 2 * n_tx * r_f), n_tx * r_f)
            ref_v = oracles.wirtinger_augmented_norm(oracles.real_hessian(f_v, 4 * n * r_f), 2 * n * r_f)
            h_err = max(h_err, abs(h_c - ref_c) / ref_c, abs(h_v - ref_v) / ref_v)
    flags = [hessian_sensitivity(a.basis.c4, a.basis.v_y_h.conj().T, DESK.n_samples)[2]
             for a in desk_test_analysis]
    frac = float(np.mean(flags))
    _verdict(record_property, "A4", g_err < 1e-4 and h_err < 1e-8 and frac >= 0.95,
             f"G1 rel err {g_err:.1e}, Hessian rel err {h_err:.1e}, "
             f"||H_dV|| > ||H_dC4|| on {100 * frac:.1f}% of {len(flags)} slices")


def test_a5_rateless_ordering(record_property, trained_desk, desk_test_analysis):
    codec, seconds = trained_desk
    c5 = np.stack([a.basis.c5 for a in desk_test_analysis])
    mids = [(lo + hi) // 2 for lo, hi in codec.config.intervals]
    mse = []
    for l in mids:
        rec = codec.reconstruct(c5, l)
        mse.append(float(np.mean(np.sum(np.abs(rec - c5) ** 2, axis=(1, 2)))))
    ordered = all(b <= 1.05 * a for a, b in zip(mse, mse[1:]))
    finite = all(np.all(np.isfinite(codec.reconstruct(c5[:50], l))) for l in range(1, codec.m + 1))
    _verdict(record_property, "A5", ordered and finite and seconds < 600,
             "bucket-midpoint MSE " + ", ".join(f"l={l}: {m:.1f}" for l, m in zip(mids, mse))
             + f"; all prefixes finite={finite}; training {seconds:.1f} s")


def test_a6_robust_quantization(record_property, desk_codec, desk_train_analysis, desk_test_slices,
                                desk_test_analysis):
    spec = QuantSpec()
    eps = float(np.percentile([g1_norm_at(a.basis.c4, a.realization.a_diag, a.realization.b, a.freqs, spec)
                               for a in desk_train_analysis[:1000]], 95))
    g1s, fixed, robust, bits0, bits1 = [], [], [], [], []
    for s, a in zip(desk_test_slices, desk_test_analysis):
        g1s.append(g1_norm_at(a.basis.c4, a.realization.a_diag, a.realization.b, a.freqs, spec))
        p0, _, _ = compress_detailed(s, desk_codec, CompressionParams(spec=spec))
        p1, _, _ = compress_detailed(s, desk_codec, CompressionParams(spec=spec, eps=eps))
        fixed.append(nmse(s, decompress_slice(serialize(p0), desk_codec))[0])
        robust.append(nmse(s, decompress_slice(serialize(p1), desk_codec))[0])
        bits0.append(p0.total_bits)
        bits1.append(p1.total_bits)
    rho = spearmanr(g1s, fixed).statistic
    growth = np.mean(bits1) / np.mean(bits0) - 1
    ok = rho > 0.3 and max(robust) < max(fixed) and growth < 0.05
    _verdict(record_property, "A6", ok,
             f"Spearman {rho:.3f}; max NMSE {max(fixed):.3f} -> {max(robust):.3f}; "
             f"mean NMSE {10 * np.log10(np.mean(fixed)):.2f} -> {10 * np.log10(np.mean(robust)):.2f} dB; "
             f"payload growth {100 * growth:.2f}%; eps {eps:.1f}")


def test_a7_quantizer_contracts(record_property):
    rng = np.random.default_rng(7)
    n = 10 ** 5
    worst = {}
    x = rng.uniform(-5, 5, n)
    for bits in (1, 4, 8, 16):
        back = uniform_dequantize(uniform_quantize(x, -5, 5, bits), -5, 5, bits)
        worst[f"uniform{bits}"] = np.max(np.abs(back - x)) / (uniform_step(-5, 5, bits) / 2)
        phi = rng.uniform(-10, 10, n)
        d = phase_distance(phase_dequantize(phase_quantize(phi, bits), bits), phi)
        worst[f"phase{bits}"] = np.max(d) / (np.pi / 2 ** bits)
    a = rng.uniform(-300, 300, n) + 1j * rng.uniform(-50, 50, n)
    m, p, bias, mr = quantize_a(a, 8, 8)
    res, res_hat = a - bias, dequantize_a(m, p, bias, mr, 8, 8) - bias
    worst["a_mag"] = np.max(np.abs(np.abs(res_hat) - np.abs(res))) / (uniform_step(*mr, 8) / 2)
    # phase is a separate component: compare its own dequantized code, since
    # a magnitude rounded to zero leaves no angle in the product
    worst["a_phase"] = np.max(phase_distance(phase_dequantize(p, 8), np.angle(res))) / (np.pi / 2 ** 8)
    b = _crandn(rng, n // 2, 2)
    m, p, scale = quantize_b(b, 8, 8)
    b_hat = dequantize_b(m, p, scale, 8, 8, shape=b.shape)
    worst["b_mag"] = np.max(np.abs(np.abs(b_hat) - np.abs(b))) / (scale * uniform_step(0, 1, 8) / 2)
    worst["b_phase"] = np.max(phase_distance(phase_dequantize(p, 8).reshape(b.shape), np.angle(b))) / (np.pi / 2 ** 8)
    v = rng.laplace(size=n)
    for scheme, name in ((UNIFORM, "v_uniform"), (MU_LAW, "v_mulaw")):
        codes, vr = quantize_v(v, 6, scheme, 255.0)
        back = dequantize_v(codes, vr, 6, scheme, 255.0)
        if scheme == UNIFORM:
            worst[name] = np.max(np.abs(back - v)) / (uniform_step(*vr, 6) / 2)
        else:
            xm = max(abs(vr[0]), abs(vr[1]))
            err = np.abs(mu_compand(back / xm, 255.0) - mu_compand(v / xm, 255.0))
            worst[name] = np.max(err) / (uniform_step(-1, 1, 6) / 2)
    u = rng.uniform(-1, 1, n)
    ident = max(np.max(np.abs(mu_expand(mu_compand(u, 255.0), 255.0) - u)),
                np.max(np.abs(mu_compand(mu_expand(u, 255.0), 255.0) - u)))
    mse = {}
    for scheme in (UNIFORM, MU_LAW):
        codes, vr = quantize_v(v, 4, scheme, 255.0)
        mse[scheme] = np.mean((dequantize_v(codes, vr, 4, scheme, 255.0) - v) ** 2)
    ratio = max(worst.values())
    ok = ratio <= 1 + 1e-9 and ident < 1e-12 and mse[MU_LAW] < mse[UNIFORM]
    _verdict(record_property, "A7", ok,
             f"worst error/half-cell {ratio:.6f} ({max(worst, key=worst.get)}); mu-law identity {ident:.1e}; "
             f"4-bit MSE mu-law {mse[MU_LAW]:.4f} vs uniform {mse[UNIFORM]:.4f}")


def test_a8_configuration_accounting(record_property):
    n_tx, r_f, n_sub = FULL.n_tx, FULL.r_f, FULL.n_samples * FULL.stride
    assert n_sub == FULL.n_sub == 3300
    crs = {}
    consistent = True
    for cr_s in (1 / 32, 1 / 16, 1 / 8, 1 / 4):
        l_t = round(2 * n_tx * r_f * cr_s)
        d = overhead_complex(l_t, r_f)
        consistent &= d == n_tx * r_f * cr_s + 3 * r_f
        crs[cr_s] = overall_cr(d, n_tx, n_sub)
    lo, hi = min(crs.values()), max(crs.values())
    inside = 1 / 3770 <= lo and hi <= 1 / 800
    _verdict(record_property, "A8", consistent and inside,
             f"overall CR spans [1/{1 / lo:.1f}, 1/{1 / hi:.1f}] for CR_s in [1/32, 1/4]; "
             f"required within [1/3770, 1/800]; d formula consistent={consistent}")


def _random_payload(rng):
    r_f = int(rng.integers(1, 33))
    l_t = int(rng.integers(1, 4097))
    n = int(rng.integers(r_f // 2 + 1, 300))
    spec = QuantSpec(*[int(b) for b in rng.integers(1, 17, 5)], v_scheme=int(rng.integers(0, 2)),
                     mu=float(rng.uniform(1, 1000)))
    a = rng.uniform(-1e3, 1e3, r_f) + 1j * rng.uniform(-1e3, 1e3, r_f)
    q = quantize_all(a, _crandn(rng, r_f, 2), rng.laplace(size=l_t) * 10 ** rng.uniform(-3, 3), spec)
    return FeedbackPayload(int(rng.integers(1, 200)), r_f, n, int(rng.integers(1, 65536 // n + 1)), q)


def test_a9_wire_format(record_property, desk_codec, desk_test_slices):
    rng = np.random.default_rng(9)
    exact = 0
    for _ in range(1000):
        p = _random_payload(rng)
        buf = serialize(p)
        exact += serialize(deserialize(buf)) == buf and len(buf) == p.byte_length
    n_fmt = n_fin = 0
    other = []
    for s in desk_test_slices[:5]:
        p, _, _ = compress_detailed(s, desk_codec, CompressionParams(l_t=64))
        buf = serialize(p)
        for pos in range(len(buf)):
            for mask in (0xFF, 0x01, 0x80):
                bad = bytearray(buf)
                bad[pos] ^= mask
                try:
                    rec = decompress_slice(bytes(bad), desk_codec)
                except FormatError:
                    n_fmt += 1
                    continue
                except Exception as exc:  # anything else breaks the contract
                    other.append(f"{pos}:{type(exc).__name__}")
                    continue
                if np.all(np.isfinite(rec.data)):
                    n_fin += 1
                else:
                    other.append(f"{pos}:non-finite")
    _verdict(record_property, "A9", exact == 1000 and not other,
             f"{exact}/1000 bit-exact round trips; corruptions: {n_fin} finite decodes, "
             f"{n_fmt} format errors, {len(other)} violations {other[:3]}")
