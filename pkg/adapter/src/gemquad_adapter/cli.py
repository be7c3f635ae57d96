"""`gemquad-adapter serve`: run the reference backend."""

from __future__ import annotations

import argparse
import logging

import uvicorn

from .config import AdapterConfig
from .service import build_app


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gemquad-adapter")
    sub = parser.add_subparsers(dest="command", required=True)
    serve = sub.add_parser("serve", help="start the backend service")
    serve.add_argument("--generator", default=AdapterConfig.generator_model,
                       help="seq2seq checkpoint name or path")
    serve.add_argument("--student", default=AdapterConfig.student_model,
                       help="extractive-QA base checkpoint name or path")
    serve.add_argument("--device", default="cpu")
    serve.add_argument("--checkpoint-dir", default=AdapterConfig.checkpoint_dir)
    serve.add_argument("--max-train-examples", type=int,
                       default=AdapterConfig.max_train_examples)
    serve.add_argument("--max-seq-len", type=int, default=AdapterConfig.max_seq_len)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8300)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    cfg = AdapterConfig(
        generator_model=args.generator,
        student_model=args.student,
        device=args.device,
        checkpoint_dir=args.checkpoint_dir,
        max_train_examples=args.max_train_examples,
        max_seq_len=args.max_seq_len,
    )
    uvicorn.run(build_app(cfg), host=args.host, port=args.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
