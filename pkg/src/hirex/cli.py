"""Operator surface.

Subcommands:
  generate    run the pipeline, write artifacts + manifest + output image
  inspect     render an artifact (latent / image / text dump) to the console
  serve-echo  host the loopback protocol server used by tests

Exit codes: 0 success, 2 artifact not found, 3 validation/config error,
4 geometry error, 5 backend error, 6 protocol error, 1 unexpected failure.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from .backend import make_toy_backend, toy_codec
from .config import parse_config, serialize_config
from .errors import (
    BackendError,
    GeometryError,
    HirexError,
    ProtocolError,
    ValidationError,
)
from .images import read_pnm, write_pnm
from .latent import read_ltns
from .pipeline import GenerationConfig, run
from .remote import EchoServer, RemoteBackend, RemoteCodec, RemoteSession, parse_endpoint

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_NOT_FOUND = 2
EXIT_VALIDATION = 3
EXIT_GEOMETRY = 4
EXIT_BACKEND = 5
EXIT_PROTOCOL = 6


def _parse_tokens(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    try:
        return tuple(int(p) for p in text.replace(" ", "").split(",") if p)
    except ValueError as exc:
        raise ValidationError(f"bad token list {text!r}") from exc


def _parse_target(text: str, cfg: GenerationConfig) -> tuple[int, ...]:
    """Pixel target "WxH" -> progressive scale sequence (1, 2, ..., m)."""
    try:
        w_px, h_px = (int(p) for p in text.lower().split("x"))
    except ValueError as exc:
        raise ValidationError(f"target must be WxH in pixels, got {text!r}") from exc
    den_h = cfg.base_h * cfg.spatial_factor
    den_w = cfg.base_w * cfg.spatial_factor
    if h_px % den_h or w_px % den_w:
        raise ValidationError(
            f"target {text} is not a whole multiple of the base resolution "
            f"{den_w}x{den_h}"
        )
    m_h, m_w = h_px // den_h, w_px // den_w
    if m_h != m_w:
        raise ValidationError(f"target {text} implies unequal per-side scales {m_w}/{m_h}")
    return tuple(range(1, m_h + 1))


def _build_backend_and_codec(cfg: GenerationConfig):
    if cfg.backend == "remote":
        if not cfg.endpoint:
            raise ValidationError("--endpoint required for the remote backend")
        session = RemoteSession(cfg.endpoint, timeout=cfg.timeout)
        return RemoteBackend(session), RemoteCodec(session)
    codec = toy_codec(cfg.spatial_factor)
    params: dict = {"seed": cfg.backend_seed, "att_scale": cfg.att_scale}
    if cfg.backend == "linear":
        params["lam"] = cfg.backend_lam
    elif cfg.backend == "edge-biased":
        params["lam"] = cfg.backend_lam
        params["bias"] = cfg.backend_bias
    elif cfg.backend == "oracle":
        rng = np.random.default_rng([cfg.backend_seed, 7])
        shape = (cfg.base_h, cfg.base_w, cfg.channels)
        params["z0"] = rng.standard_normal(shape, dtype=np.float32)
        params["eps"] = rng.standard_normal(shape, dtype=np.float32)
    return make_toy_backend(cfg.backend, **params), codec


def _write_manifest(out_dir: Path, cfg: GenerationConfig, result, elapsed: list[tuple[int, float]]):
    (out_dir / "config_echo.cfg").write_text(serialize_config(cfg))
    timing_lines = [f"stage{scale}x = {seconds:.3f} s" for scale, seconds in elapsed]
    (out_dir / "timings.txt").write_text("\n".join(timing_lines) + "\n" if timing_lines else "")
    lines = [
        "# hirex run manifest",
        "config = config_echo.cfg",
        f"seed = {cfg.seed}",
        "timings = timings.txt",
        "[artifacts]",
        "config_echo.cfg stage=1 timestep=-",
        "timings.txt stage=1 timestep=-",
    ]
    for relpath, stage, timestep in result.artifact_index:
        t = "-" if timestep is None else str(timestep)
        lines.append(f"{relpath} stage={stage} timestep={t}")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def cmd_generate(args: argparse.Namespace) -> int:
    overrides: dict = {}
    for field, value in [
        ("steps", args.steps),
        ("seed", args.seed),
        ("prompt_threshold", args.c),
        ("controlnet_steps", args.controlnet_steps),
        ("backend", args.backend),
        ("backend_lam", args.lam),
        ("backend_bias", args.bias),
        ("backend_seed", args.backend_seed),
        ("endpoint", args.endpoint),
        ("canny_low", args.canny_low),
        ("canny_high", args.canny_high),
        ("canny_sigma", args.canny_sigma),
        ("eta_mode", args.eta_mode),
        ("workers", args.workers),
    ]:
        if value is not None:
            overrides[field] = value
    if args.stride is not None:
        overrides["stride_h"] = args.stride
        overrides["stride_w"] = args.stride
    if args.identity_bijections:
        overrides["identity_bijections"] = True
    if args.no_residual:
        overrides["residual_injection"] = False
    if args.scales is not None:
        overrides["scales"] = tuple(int(p) for p in args.scales.split(","))

    if args.config is not None and not Path(args.config).exists():
        print(f"config not found: {args.config}", file=sys.stderr)
        return EXIT_NOT_FOUND
    cfg = parse_config(args.config, overrides)
    if args.target is not None:
        cfg = parse_config(args.config, {**overrides, "scales": _parse_target(args.target, cfg)})

    out_dir = Path(args.out_dir or os.environ.get("ADP2_OUT_DIR") or "hirex-run")
    out_dir.mkdir(parents=True, exist_ok=True)

    prompt_tokens = _parse_tokens(args.prompt_tokens)
    backend, codec = _build_backend_and_codec(cfg)
    started = time.perf_counter()
    result = run(cfg, prompt_tokens, backend, codec, out_dir=out_dir)
    _write_manifest(
        out_dir, cfg, result, [(s.scale, s.wall_clock) for s in result.stages]
    )
    print(
        f"wrote {out_dir / 'output.ppm'} "
        f"({result.image.shape[1]}x{result.image.shape[0]} px, "
        f"{len(result.artifact_index)} artifacts, "
        f"{time.perf_counter() - started:.2f} s)"
    )
    return EXIT_OK


def cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.exists():
        print(f"artifact not found: {path}", file=sys.stderr)
        return EXIT_NOT_FOUND
    suffix = path.suffix.lower()
    if suffix == ".ltns":
        z = read_ltns(path)
        h, w, c = z.shape
        print(f"LTNS latent {h}x{w}x{c} min={z.min():.6f} max={z.max():.6f} mean={z.mean():.6f}")
        if args.out:
            ch = z[:, :, 0]
            span = float(ch.max() - ch.min()) or 1.0
            gray = ((ch - ch.min()) / span * 255.0).astype(np.uint8)
            write_pnm(args.out, gray[:, :, None])
            print(f"wrote {args.out}")
    elif suffix in (".pgm", ".ppm"):
        img = read_pnm(path)
        h, w, c = img.shape
        kind = "PGM" if c == 1 else "PPM"
        print(f"{kind} image {h}x{w}x{c} nonzero={int(np.count_nonzero(img))}")
    elif suffix in (".txt", ".cfg"):
        sys.stdout.write(path.read_text())
    else:
        print(f"unsupported artifact type: {path.name}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def cmd_serve_echo(args: argparse.Namespace) -> int:
    host, port = parse_endpoint(args.listen)
    geometry = tuple(int(p) for p in args.latent.split(","))
    if len(geometry) != 3:
        raise ValidationError("--latent must be h,w,c")
    server = EchoServer(
        (host, port),
        seed=args.seed,
        lam=args.lam,
        spatial_factor=args.spatial_factor,
        latent_geometry=geometry,  # type: ignore[arg-type]
        vocab_size=args.vocab,
    )
    actual = server.server_address
    print(f"echo server listening on {actual[0]}:{actual[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hirex")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="run a higher-resolution generation")
    gen.add_argument("--config", default=None)
    gen.add_argument("--prompt-tokens", default="", help="comma-separated token indices")
    gen.add_argument("--target", default=None, help="pixel target WxH")
    gen.add_argument("--scales", default=None, help="progressive scale sequence, e.g. 1,2,3")
    gen.add_argument("--steps", type=int, default=None)
    gen.add_argument("--stride", type=int, default=None)
    gen.add_argument("--c", type=float, default=None, dest="c")
    gen.add_argument("--controlnet-steps", type=int, default=None)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--backend", choices=["zero", "linear", "oracle", "edge-biased", "remote"], default=None)
    gen.add_argument("--lam", type=float, default=None)
    gen.add_argument("--bias", type=float, default=None)
    gen.add_argument("--backend-seed", type=int, default=None)
    gen.add_argument("--endpoint", default=None)
    gen.add_argument("--out-dir", default=None)
    gen.add_argument("--canny-low", type=float, default=None)
    gen.add_argument("--canny-high", type=float, default=None)
    gen.add_argument("--canny-sigma", type=float, default=None)
    gen.add_argument("--eta-mode", choices=["cosine", "zero", "one"], default=None)
    gen.add_argument("--identity-bijections", action="store_true")
    gen.add_argument("--no-residual", action="store_true")
    gen.add_argument("--workers", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    ins = sub.add_parser("inspect", help="render an artifact")
    ins.add_argument("path")
    ins.add_argument("--out", default=None, help="write a PGM rendering here")
    ins.set_defaults(func=cmd_inspect)

    srv = sub.add_parser("serve-echo", help="host the loopback protocol server")
    srv.add_argument("--listen", default="127.0.0.1:7741")
    srv.add_argument("--seed", type=int, default=0)
    srv.add_argument("--lam", type=float, default=1.0)
    srv.add_argument("--spatial-factor", type=int, default=8)
    srv.add_argument("--latent", default="16,16,4", help="served latent geometry h,w,c")
    srv.add_argument("--vocab", type=int, default=1024)
    srv.set_defaults(func=cmd_serve_echo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"artifact not found: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ProtocolError as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except HirexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
