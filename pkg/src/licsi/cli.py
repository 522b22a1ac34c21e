"""Command line front end: ``licsi synth|train|compress|decompress|eval|sweep``.

Exit codes: 0 success, 2 malformed input file, 3 numerical failure,
4 configuration or usage error.
"""
import argparse
import logging
import sys

import numpy as np

from . import channel, pipeline, rateless
from .errors import ConfigError, FormatError, LicsiError, NumericalError, UntrainedError
from .payload import parse_stream, serialize_stream
from .quant import QuantSpec, parse_scheme

log = logging.getLogger("licsi")

EXIT_FORMAT, EXIT_NUMERICAL, EXIT_CONFIG = 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def read_config(path):
    """``key = value`` lines; ``#`` starts a comment; keys use the long flag
    names with or without dashes."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, val = (x.strip() for x in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = val
    return out


def parse_intervals(text):
    """``"33-88,89-144"`` -> ``[(33, 88), (89, 144)]``."""
    try:
        return [tuple(int(x) for x in part.split("-")) for part in text.split(",") if part]
    except ValueError:
        raise ConfigError(f"bad interval list {text!r}; expected lo-hi,lo-hi,...") from None


def _int_list(text):
    try:
        return [int(x) for x in str(text).split(",") if x]
    except ValueError:
        raise ConfigError(f"bad integer list {text!r}") from None


def _bit_pair(text):
    vals = _int_list(text)
    if len(vals) != 2:
        raise ConfigError(f"expected MAG,PHASE bit widths, got {text!r}")
    return vals


def _spec_from_args(a):
    am, ap = _bit_pair(a.a_bits)
    bm, bp = _bit_pair(a.b_bits)
    return QuantSpec(am, ap, bm, bp, int(a.v_bits), parse_scheme(a.v_scheme), float(a.mu)).validate()


def _add_sampling(p):
    p.add_argument("--r-f", type=int, default=pipeline.DESK.r_f)
    p.add_argument("--n-samples", type=int, default=pipeline.DESK.n_samples)
    p.add_argument("--stride", type=int, default=pipeline.DESK.stride)


def _add_quant(p):
    p.add_argument("--a-bits", default="8,8", help="pole magnitude,phase bits")
    p.add_argument("--b-bits", default="8,8", help="B magnitude,phase bits")
    p.add_argument("--v-bits", type=int, default=6)
    p.add_argument("--v-scheme", default="mu-law", choices=["mu-law", "uniform"])
    p.add_argument("--mu", type=float, default=255.0)
    p.add_argument("--eps", type=float, default=None, help="run robust bit allocation with this threshold")


def build_parser():
    ap = _Parser(prog="licsi", description="Loewner-interpolation CSI compression")
    ap.add_argument("--config", help="key=value file; explicit flags take precedence")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic multipath dataset")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-tx", "--ntx", type=int, default=pipeline.DESK.n_tx)
    p.add_argument("--n-sub", "--nsub", type=int, default=pipeline.DESK.n_sub)
    p.add_argument("--n-paths", "--paths", type=int, default=6)
    p.add_argument("--delay-spread", type=float, default=30e-9)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a rateless codec")
    p.add_argument("--data", required=True)
    _add_sampling(p)
    p.add_argument("--m", type=int, default=pipeline.DESK.m)
    p.add_argument("--intervals", default=None, help="lo-hi,lo-hi,... (default: 4 buckets ending at M)")
    p.add_argument("--weights", default=None, help="comma separated loss weights")
    p.add_argument("--hidden", default=None, help="decoder hidden widths, e.g. 512 or '' for affine")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr-max", type=float, default=3e-3)
    p.add_argument("--lr-min", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compress", help="compress dataset slices into a payload stream")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True)
    _add_sampling(p)
    _add_quant(p)
    p.add_argument("--l-t", type=int, default=None)
    p.add_argument("--index", type=int, default=None, help="only this slice (default: all)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("decompress", help="reconstruct slices from a payload stream")
    p.add_argument("--payload", required=True)
    p.add_argument("--codec", required=True)
    p.add_argument("--n-sub", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="per-slice metrics as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", required=True)
    _add_sampling(p)
    _add_quant(p)
    p.add_argument("--l-t", type=int, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="overhead/NMSE sweep as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--codec", action="append", required=True,
                   help="codec file; repeat as R_F=FILE for several r_f values")
    p.add_argument("--r-f", default=str(pipeline.DESK.r_f), help="comma separated")
    p.add_argument("--l-t", default=None, help="comma separated (default: bucket ends)")
    p.add_argument("--n-samples", type=int, default=pipeline.DESK.n_samples)
    p.add_argument("--stride", type=int, default=pipeline.DESK.stride)
    _add_quant(p)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--n-rx", type=int, default=1)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--out", default=None)
    return ap


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    values = read_config(known.config)
    sub = parser._subparsers._group_actions[0].choices
    for sp in sub.values():
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in values.items() if k in dests})
        # a config value satisfies a required flag
        for a in sp._actions:
            if a.dest in values:
                a.required = False
    unknown = set(values) - {a.dest for sp in sub.values() for a in sp._actions}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")


def _coerce(parser, args):
    """Config values arrive as strings; run them through each action's type."""
    sp = parser._subparsers._group_actions[0].choices[args.command]
    for a in sp._actions:
        val = getattr(args, a.dest, None)
        if isinstance(val, str) and a.type is not None:
            setattr(args, a.dest, a.type(val))
        if a.choices is not None and getattr(args, a.dest, None) not in a.choices and val is not None:
            raise ConfigError(f"--{a.dest.replace('_', '-')} must be one of {list(a.choices)}")


def _write_csv(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_synth(a):
    cfg = channel.ChannelConfig(n_tx=a.n_tx, n_sub=a.n_sub, n_paths=a.n_paths,
                                delay_spread=a.delay_spread, seed=a.seed).validate()
    channel.save_dataset(channel.synthesize_dataset(cfg, a.count), a.out, seed=a.seed)
    log.info("wrote %d slices to %s", a.count, a.out)


def cmd_train(a):
    slices = channel.load_dataset(a.data)
    if not slices:
        raise ConfigError("dataset is empty")
    c5 = np.stack([pipeline.analyze_slice(s, a.n_samples, a.stride, a.r_f).basis.c5 for s in slices])
    hidden = None if a.hidden is None else tuple(_int_list(a.hidden))
    weights = None if a.weights is None else tuple(float(x) for x in str(a.weights).split(","))
    cfg = rateless.CodecConfig(
        input_dim=2 * slices[0].n_tx * a.r_f, m=a.m,
        intervals=parse_intervals(a.intervals) if a.intervals else rateless.default_intervals(a.m, 4),
        weights=weights, hidden_dims=hidden, epochs=a.epochs, batch_size=a.batch_size,
        lr_max=a.lr_max, lr_min=a.lr_min, seed=a.seed)
    codec = rateless.train(c5, cfg, progress=lambda e, l: log.info("epoch %d loss %.6g", e, l))
    rateless.save_codec(codec, a.out)


def _params(a):
    return pipeline.CompressionParams(a.n_samples, a.stride, a.r_f, a.l_t, _spec_from_args(a), a.eps)


def cmd_compress(a):
    slices = channel.load_dataset(a.data)
    if a.index is not None:
        if not 0 <= a.index < len(slices):
            raise ConfigError(f"index {a.index} outside dataset of {len(slices)} slices")
        slices = [slices[a.index]]
    codec = rateless.load_codec(a.codec)
    params = _params(a)
    payloads = [pipeline.compress_slice(s, codec, params) for s in slices]
    with open(a.out, "wb") as fh:
        fh.write(serialize_stream(payloads))


def cmd_decompress(a):
    with open(a.payload, "rb") as fh:
        payloads = parse_stream(fh.read())
    codec = rateless.load_codec(a.codec)
    out = [pipeline.decompress_slice(p, codec, a.n_sub) for p in payloads]
    channel.save_dataset(out, a.out, seed=0)


def cmd_eval(a):
    slices = channel.load_dataset(a.data)
    codec = rateless.load_codec(a.codec)
    params = _params(a)
    rows = []
    for k, s in enumerate(slices):
        rec, p = pipeline.roundtrip(s, codec, params, s.n_sub)
        rep = pipeline.metrics_for(p, s.n_sub, pipeline.nmse(s, rec)[0])
        rows.append(dict(index=k, **vars(rep)))
    fields = ["index"] + list(pipeline.MetricsReport.__dataclass_fields__)
    lines = [",".join(fields)]
    for row in rows:
        lines.append(",".join("" if row[f] is None else repr(row[f]) if isinstance(row[f], float)
                              else str(row[f]) for f in fields))
    _write_csv("\n".join(lines) + "\n", a.out)


def cmd_sweep(a):
    slices = channel.load_dataset(a.data)
    r_fs = _int_list(a.r_f)
    codecs = {}
    for item in a.codec:
        if "=" in item:
            key, path = item.split("=", 1)
            codecs[int(key)] = rateless.load_codec(path)
        else:
            codec = rateless.load_codec(item)
            codecs.update({r: codec for r in r_fs if r not in codecs})
    missing = [r for r in r_fs if r not in codecs]
    if missing:
        raise ConfigError(f"no codec given for r_f={missing}")
    if a.l_t:
        l_ts = _int_list(a.l_t)
    else:
        l_ts = sorted({hi for c in codecs.values() for _, hi in c.config.intervals})
    grid = pipeline.SweepGrid(l_t=l_ts, r_f=r_fs, specs={"cli": _spec_from_args(a)},
                              n_samples=a.n_samples, stride=a.stride, eps=a.eps,
                              n_rx=a.n_rx, n_layers=a.layers, snr_db=a.snr_db)
    _write_csv(pipeline.rows_to_csv(pipeline.evaluate_sweep(slices, codecs, grid)), a.out)


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "compress": cmd_compress,
            "decompress": cmd_decompress, "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        _coerce(parser, args)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        COMMANDS[args.command](args)
    except FormatError as exc:
        print(f"licsi: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericalError as exc:
        print(f"licsi: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, UntrainedError, ValueError) as exc:
        print(f"licsi: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"licsi: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LicsiError as exc:
        print(f"licsi: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:   # argparse usage errors and --help
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
