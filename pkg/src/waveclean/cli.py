"""Command-line surface: train, denoise, stream, bench, inspect.

Exit codes: 0 success, 2 usage error (argparse), 1 runtime error with a
message on stderr. All subcommands honor --seed for determinism.
"""
from __future__ import annotations

import argparse
import queue
import sys
import threading

import numpy as np

from . import __version__
from .accounting import count_macs, rtf_bench
from .archive import archive_from_models, build_models, load_weights, save_weights
from .configfile import ConfigBundle, load_config
from .discriminator import Discriminator
from .generator import Generator
from .tensor import Tensor, no_grad
from .training import evaluate_enhancement, make_synthetic_dataset, train
from .wavio import AudioClip, wav_read, wav_write

STREAM_QUANTUM = 256  # samples per latent frame of the default 8-layer model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="waveclean",
        description="Causal time-domain speech denoiser (16 kHz mono)")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=None,
                        help="global RNG seed (train default: the config's seed)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on the synthetic desk-scale dataset")
    p.add_argument("--config", required=False, help="key=value config file")
    p.add_argument("--out", required=True, help="output weight archive")

    p = sub.add_parser("denoise", help="enhance a WAV file offline")
    p.add_argument("--weights", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)

    p = sub.add_parser("stream", help="enhance raw PCM16 mono 16 kHz stdin -> stdout")
    p.add_argument("--weights", required=True)
    p.add_argument("--chunk-ms", type=int, default=64,
                   help="chunk size in ms (rounded up to a multiple of 256 samples)")

    p = sub.add_parser("bench", help="real-time-factor benchmark")
    p.add_argument("--weights", required=True)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--seconds", type=float, default=1.0)

    p = sub.add_parser("inspect", help="print per-layer parameter/MACS report")
    p.add_argument("--config", required=False, help="key=value config file")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except BrokenPipeError:
        return 1
    except Exception as exc:  # runtime errors: message on stderr, exit 1
        print(f"waveclean: error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    if args.command == "train":
        return _cmd_train(args)
    if args.command == "denoise":
        return _cmd_denoise(args)
    if args.command == "stream":
        return _cmd_stream(args)
    if args.command == "bench":
        return _cmd_bench(args)
    if args.command == "inspect":
        return _cmd_inspect(args)
    raise AssertionError(f"unhandled command {args.command}")


def _load_bundle(args) -> ConfigBundle:
    return load_config(args.config) if getattr(args, "config", None) else ConfigBundle()


def _cmd_train(args) -> int:
    bundle = _load_bundle(args)
    train_cfg = bundle.train
    if args.seed is not None:
        from dataclasses import replace
        train_cfg = replace(train_cfg, seed=args.seed)
    gen = Generator(bundle.generator, seed=train_cfg.seed)
    disc = Discriminator(bundle.discriminator, seed=train_cfg.seed + 1)
    dataset = make_synthetic_dataset(bundle.data.pairs, seed=train_cfg.seed + 2,
                                     duration=bundle.data.duration)
    val = make_synthetic_dataset(bundle.data.val_pairs, seed=train_cfg.seed + 3,
                                 duration=bundle.data.duration)

    def checkpoint(step, g, d):
        save_weights(archive_from_models(g, d, extra={"step": step}), args.out)
        print(f"step {step}: checkpoint written to {args.out}")

    result = train(gen, disc, dataset, train_cfg, loss_weights=bundle.loss,
                   mixup_policy=bundle.mixup, val_dataset=val,
                   checkpoint_fn=checkpoint if train_cfg.checkpoint_every else None)
    save_weights(archive_from_models(gen, disc,
                                     extra={"step": result.iterations}), args.out)
    metrics = evaluate_enhancement(gen, val)
    print(f"trained {result.iterations} iterations; final G loss "
          f"{result.history['g_loss'][-1]:.4f}, D loss {result.history['d_loss'][-1]:.4f}")
    print(f"validation: loss {metrics['loss']:.4f}, si-snr gain "
          f"{metrics['si_snr_gain']:+.2f} dB; weights -> {args.out}")
    return 0


def _cmd_denoise(args) -> int:
    gen, _ = build_models(load_weights(args.weights))
    clip = wav_read(args.infile, require_rate=16000)
    with no_grad():
        out = gen.forward(Tensor(clip.samples.reshape(1, 1, -1))).data[0, 0]
    wav_write(args.outfile, AudioClip(np.clip(out, -1.0, 1.0), clip.sample_rate))
    print(f"denoised {clip.duration:.2f} s -> {args.outfile}")
    return 0


def _cmd_stream(args) -> int:
    gen, _ = build_models(load_weights(args.weights))
    chunk_samples = max(1, args.chunk_ms) * 16
    quantum = gen.cfg.block
    chunk_samples += (-chunk_samples) % max(quantum, STREAM_QUANTUM)
    stream = gen.stream()

    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    in_q: queue.Queue = queue.Queue(maxsize=4)
    out_q: queue.Queue = queue.Queue(maxsize=4)

    def reader():
        while True:
            data = stdin.read(chunk_samples * 2)
            if not data:
                break
            in_q.put(data)
        in_q.put(None)

    def writer():
        while True:
            item = out_q.get()
            if item is None:
                break
            stdout.write(item)
            stdout.flush()

    threads = [threading.Thread(target=reader, daemon=True),
               threading.Thread(target=writer, daemon=True)]
    for th in threads:
        th.start()
    while True:
        data = in_q.get()
        if data is None:
            break
        pcm = np.frombuffer(data[: len(data) - len(data) % 2], dtype="<i2")
        n = pcm.size
        padded = np.zeros(chunk_samples, dtype=np.float32)
        padded[:n] = pcm.astype(np.float32) / 32768.0
        out = stream.process(padded)[:n]
        ints = np.clip(np.round(out.astype(np.float64) * 32768.0), -32768, 32767)
        out_q.put(ints.astype("<i2").tobytes())
    out_q.put(None)
    threads[1].join()
    return 0


def _cmd_bench(args) -> int:
    gen, _ = build_models(load_weights(args.weights))
    result = rtf_bench(gen, runs=args.runs, seconds=args.seconds,
                       seed=args.seed if args.seed is not None else 0)
    print(result.format())
    return 0


def _cmd_inspect(args) -> int:
    bundle = _load_bundle(args)
    gen_report = count_macs(bundle.generator, input_seconds=1.0)
    disc_report = count_macs(bundle.discriminator, input_seconds=1.0)
    print("# generator")
    print(gen_report.format())
    print("# discriminator")
    print(disc_report.format())
    total = gen_report.total_params + disc_report.total_params
    print(f"# combined params: {total} ({total / 1e6:.3f}M)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
