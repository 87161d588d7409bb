"""Command line: ``fusedmlp {roofline,bench,train-image,infer-image}``.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines; keys are
the long flag names (dashes or underscores). Explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import logging
import sys

from fusedmlp import roofline
from fusedmlp.config import ConfigError, load_config, parse_int_list

log = logging.getLogger("fusedmlp")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file with defaults for any flag")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--tm", type=int)
    p.add_argument("--precision", choices=("f32", "bf16"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fusedmlp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("roofline", help="arithmetic intensity / peak table as CSV")
    _common(p)
    p.add_argument("--mode", choices=roofline.MODES)
    p.add_argument("--nlayers", help="comma list or a..b, default 2..16")
    p.add_argument("--tms", help="comma list of TM values for the SYCL scheme")
    p.add_argument("--printed", action="store_true",
                   help="emit the training-forward closed forms next to the alternative accounting")
    p.add_argument("--out")

    p = sub.add_parser("bench", help="function-approximation benchmark")
    _common(p)
    p.add_argument("--width", type=int)
    p.add_argument("--nlayers", type=int)
    p.add_argument("--batch-sizes", help="comma list or 2^a..2^b")
    p.add_argument("--max-batch", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--modes", help="comma list of inference,training")
    p.add_argument("--out")

    p = sub.add_parser("train-image", help="fit a hash-encoded MLP to a PGM image")
    _common(p)
    p.add_argument("--image")
    p.add_argument("--steps", type=int)
    p.add_argument("--nlayers", type=int)
    p.add_argument("--lr-mlp", type=float)
    p.add_argument("--lr-tables", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--log2-table-size", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--curve")

    p = sub.add_parser("infer-image", help="reconstruct an image from a checkpoint")
    _common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--like", help="take height and width from this PGM")
    p.add_argument("--out")
    return parser


def _merged(args: argparse.Namespace) -> dict:
    opts = load_config(args.config)
    for key, value in vars(args).items():
        if value is not None and key not in ("config", "command"):
            opts[key] = value
    return opts


def _get(opts: dict, key: str, cast, default=None):
    if key not in opts:
        return default
    value = opts[key]
    if isinstance(value, str) and cast is not str:
        if cast is bool:
            return value.lower() in ("1", "true", "yes", "on")
        return cast(value)
    return value


def _require(opts: dict, key: str):
    if key not in opts:
        raise ConfigError(f"missing required option --{key.replace('_', '-')}")
    return opts[key]


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def _int_range(value: str) -> list[int]:
    """``"2..16"`` (inclusive) or a comma list."""
    if ".." in value:
        lo, hi = (int(v) for v in value.split(".."))
        return list(range(lo, hi + 1))
    return parse_int_list(value)


def cmd_roofline(opts: dict) -> int:
    nlayers = _int_range(str(opts["nlayers"])) if "nlayers" in opts else list(range(2, 17))
    out = _open_out(opts.get("out"))
    try:
        if _get(opts, "printed", bool, False):
            out.write("scheme,nlayers,formula,alternative\n")
            for scheme in (roofline.Scheme.FUSED_SYCL, roofline.Scheme.FUSED_CUDA):
                for n in nlayers:
                    out.write(f"{scheme.value},{n},{roofline.oi_train_forward_printed(scheme, n)},"
                              f"{roofline.oi_train_forward_printed(scheme, n, alternative=True)}\n")
            return 0
        tms = parse_int_list(opts["tms"]) if "tms" in opts else [_get(opts, "tm", int, 8)]
        rows = roofline.roofline_rows(nlayers, tms, _get(opts, "mode", str, "train_full"))
        roofline.rows_to_csv(rows, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bench(opts: dict) -> int:
    from fusedmlp.bench import BenchConfig, run_function_approx_bench, write_bench_csv
    from fusedmlp.model import Precision

    cfg = BenchConfig()
    width = _get(opts, "width", int, cfg.width)
    cfg = BenchConfig(
        width=width, in_width=width, out_width=width,
        nlayers=_get(opts, "nlayers", int, cfg.nlayers),
        precision=Precision(_get(opts, "precision", str, "bf16")),
        tm=_get(opts, "tm", int, cfg.tm),
        workers=_get(opts, "workers", int, cfg.workers),
        iters=_get(opts, "iters", int),
        lr=_get(opts, "lr", float, cfg.lr),
        seed=_get(opts, "seed", int, cfg.seed),
        max_batch=_get(opts, "max_batch", int),
    )
    if "batch_sizes" in opts:
        cfg.batch_sizes = parse_int_list(opts["batch_sizes"])
    if "modes" in opts:
        cfg.modes = tuple(m.strip() for m in opts["modes"].split(","))
    rows = run_function_approx_bench(cfg)
    out = _open_out(opts.get("out"))
    try:
        write_bench_csv(rows, cfg.nlayers, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_train_image(opts: dict) -> int:
    from fusedmlp.checkpoint import checkpoint_save
    from fusedmlp.encoding import HashGridConfig
    from fusedmlp.image import ImageConfig, train_image, write_curve_csv

    if _get(opts, "precision", str, "bf16") != "bf16":
        raise ConfigError("train-image runs on the fused bf16 engine only")
    defaults = ImageConfig()
    enc = HashGridConfig(levels=_get(opts, "levels", int, defaults.encoding.levels),
                         log2_table_size=_get(opts, "log2_table_size", int,
                                              defaults.encoding.log2_table_size))
    cfg = ImageConfig(nlayers=_get(opts, "nlayers", int, defaults.nlayers), encoding=enc,
                      lr_mlp=_get(opts, "lr_mlp", float, defaults.lr_mlp),
                      lr_tables=_get(opts, "lr_tables", float, defaults.lr_tables),
                      tm=_get(opts, "tm", int, defaults.tm),
                      workers=_get(opts, "workers", int, defaults.workers),
                      seed=_get(opts, "seed", int, defaults.seed))
    steps = _get(opts, "steps", int, 1000)
    ckpt, curve = train_image(_require(opts, "image"), cfg, steps)
    checkpoint_save(_require(opts, "checkpoint"), ckpt)
    log.info("final mse %.3g, psnr %.2f dB", curve[-1]["mse"], curve[-1]["psnr"])
    out = _open_out(opts.get("curve"))
    try:
        write_curve_csv(curve, out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_infer_image(opts: dict) -> int:
    from fusedmlp.checkpoint import checkpoint_load
    from fusedmlp.fused import TileConfig
    from fusedmlp.image import infer_image
    from fusedmlp.pgm import read_pgm

    ckpt = checkpoint_load(_require(opts, "checkpoint"))
    if "like" in opts:
        height, width = read_pgm(opts["like"]).shape
    else:
        height, width = _get(opts, "height", int), _get(opts, "width", int)
        if height is None or width is None:
            raise ConfigError("give --height and --width, or --like IMAGE")
    tile = TileConfig(tm=_get(opts, "tm", int, 8), workers=_get(opts, "workers", int, 1))
    infer_image(ckpt, height, width, _require(opts, "out"), tile)
    return 0


COMMANDS = {"roofline": cmd_roofline, "bench": cmd_bench,
            "train-image": cmd_train_image, "infer-image": cmd_infer_image}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](_merged(args))
    except (ConfigError, OSError, ValueError) as exc:
        print(f"fusedmlp {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
