"""Command-line entry point: ``mathrec {build-data,train,eval,predict}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 renderer
error, 5 checkpoint error, 10 internal error.  Failures print one JSON line
``{"error": <type>, "exit_code": <n>, "message": <text>}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from mathrec.errors import ConfigError, MathRecError

logger = logging.getLogger("mathrec")

EXIT_OK = 0
EXIT_INTERNAL = MathRecError.exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are configuration errors
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _str_list(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mathrec", description="Formula image to LaTeX recognition pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-data", help="render a corpus into a length-balanced manifest")
    p.add_argument("--corpus", required=True, help="text file, one formula per line "
                   "(optionally prefixed by SUBSET and a tab)")
    p.add_argument("--out", required=True, help="output directory for manifest, vocab and images")
    p.add_argument("--fonts", type=_str_list, default=None,
                   help="comma-separated font families (default: dejavu-sans)")
    p.add_argument("--dpis", type=_int_list, default=None,
                   help="comma-separated render resolutions (default: 80,120,160)")
    p.add_argument("--buckets", type=_int_list, default=None,
                   help="comma-separated token-length bucket boundaries")
    p.add_argument("--per-bucket", type=int, default=None,
                   help="samples kept per length bucket (default: keep all)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--renderer", default="stub",
                   help="'stub' for the built-in renderer, or a command template with "
                        "{latex_file} {out_png} {dpi} {font} placeholders")
    p.add_argument("--vocab", default=None, help="reuse an existing vocabulary file")

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True, help="YAML training config")
    p.add_argument("--resume", default=None, metavar="PATH", help="checkpoint directory to resume from")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field by dotted key (repeatable)")

    p = sub.add_parser("eval", help="decode a manifest and write metric reports")
    p.add_argument("--manifest", required=True, help="manifest.jsonl to evaluate")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--beam", type=int, default=1, help="beam width; 1 is greedy (default: 1)")
    p.add_argument("--max-len", type=int, default=256, help="maximum decoded tokens (default: 256)")
    p.add_argument("--out", required=True, help="output directory for report.json, "
                   "report.txt and predictions.jsonl")

    p = sub.add_parser("predict", help="print the LaTeX for one image")
    p.add_argument("--image", required=True, help="image file")
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--beam", type=int, default=1, help="beam width; 1 is greedy (default: 1)")
    p.add_argument("--max-len", type=int, default=256, help="maximum decoded tokens (default: 256)")
    return parser


def _build_data(args) -> int:
    from mathrec.data import BuildConfig, build_manifest

    options = {"seed": args.seed, "renderer": args.renderer, "per_bucket": args.per_bucket,
               "vocabulary": args.vocab}
    for key in ("fonts", "dpis", "buckets"):
        if getattr(args, key) is not None:
            options[key] = tuple(getattr(args, key))
    manifest = build_manifest(args.corpus, args.out, BuildConfig(**options))
    print(Path(args.out) / "manifest.jsonl")
    logger.info("wrote %d records", len(manifest.records))
    return EXIT_OK


def _train(args) -> int:
    from mathrec.train import load_train_config, train_loop

    cfg = load_train_config(args.config, args.overrides)
    result = train_loop(cfg, resume=args.resume)
    print(result.final_checkpoint)
    return EXIT_OK


def _check_beam(args) -> None:
    if args.beam < 1 or args.max_len < 1:
        raise ConfigError("--beam and --max-len must be >= 1")


def _eval(args) -> int:
    from mathrec.data import load_manifest
    from mathrec.evaluation import DecodeConfig, evaluate, format_table, write_report

    _check_beam(args)
    manifest = load_manifest(args.manifest)
    report, rows = evaluate(manifest, args.checkpoint, DecodeConfig(args.beam, args.max_len))
    write_report(report, rows, args.out)
    sys.stdout.write(format_table(report))
    return EXIT_OK


def _predict(args) -> int:
    import torch

    from mathrec.evaluation import prediction_text
    from mathrec.latex import try_normalize
    from mathrec.model import generate, preprocess
    from mathrec.train import load_checkpoint, load_image

    _check_beam(args)
    state = load_checkpoint(args.checkpoint)
    image = preprocess(load_image(args.image), state.model.config.canvas)
    with torch.no_grad():
        hyp = generate(state.model, image, args.max_len, args.beam)
    text = prediction_text(hyp.tokens, state.vocab)
    normalized = try_normalize(text)
    print(text if normalized is None else normalized)
    return EXIT_OK


COMMANDS = {"build-data": _build_data, "train": _train, "eval": _eval, "predict": _predict}


def _report(exc: BaseException, code: int) -> int:
    line = {"error": type(exc).__name__, "exit_code": code, "message": str(exc)}
    print(json.dumps(line), file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except MathRecError as exc:
        return _report(exc, exc.exit_code)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except MathRecError as exc:
        return _report(exc, exc.exit_code)
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal exit code
        logger.debug("internal error", exc_info=True)
        return _report(exc, EXIT_INTERNAL)


if __name__ == "__main__":
    sys.exit(main())
