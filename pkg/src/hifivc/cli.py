"""Command line entry point: prepare / train / convert / eval / f0."""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

import numpy as np

from hifivc.audio import SAMPLE_RATE, load_audio, save_audio
from hifivc.config import RunConfig
from hifivc.content import build_encoder
from hifivc.data import TrainingSet, prepare_utterance
from hifivc.errors import HifiVCError
from hifivc.f0 import FRAME_PERIOD_S, extract_f0
from hifivc.objectives import train_loop
from hifivc.pipeline import (
    Manifest, VoiceConverter, build_asr_client, evaluate, make_split, scan_dataset,
)

log = logging.getLogger("hifivc")


def load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return RunConfig.load(args.config)
    if getattr(args, "preset", "full") == "small":
        return RunConfig.small()
    return RunConfig()


def cmd_prepare(args):
    manifest = make_split(scan_dataset(args.dataset), args.holdout, args.seed)
    manifest.write(args.out)
    train, test = manifest.speakers_in("train"), manifest.speakers_in("test")
    print(f"{len(manifest.entries)} utterances; {len(train)} train / {len(test)} test speakers "
          f"-> {args.out}")


def cmd_init_config(args):
    (RunConfig.small() if args.preset == "small" else RunConfig()).save(args.out)
    print(f"wrote {args.out}")


def cmd_train(args):
    config = load_config(args)
    manifest = Manifest.read(args.manifest).split("train")
    encoder = build_encoder(config.content.encoder, config.content.seed, config.content.dim,
                            config.content.model_path, config.mel)
    seg = config.train.segment_frames
    entries = list(manifest.entries)
    random.Random(config.train.seed).shuffle(entries)
    n_val = int(round(len(entries) * args.val_fraction))
    feats = []
    for e in entries:
        wav = load_audio(e.path, SAMPLE_RATE)
        feats.append(prepare_utterance(wav, encoder, config, e.utt_id, e.speaker, min_frames=seg))
    validation = TrainingSet(feats[:n_val], seg) if n_val else None
    dataset = TrainingSet(feats[n_val:], seg)
    Path(args.out_dir).mkdir(parents=True, exist_ok=True)
    config.save(Path(args.out_dir) / "config.yaml")
    ckpt = train_loop(dataset, config, args.out_dir, validation=validation,
                      content_encoder=encoder, resume=not args.no_resume)
    print(f"finished epoch {ckpt.epoch} (step {ckpt.step}); checkpoints in {args.out_dir}")


def cmd_convert(args):
    converter = VoiceConverter.from_file(args.checkpoint, force=args.force)
    out = converter.convert(load_audio(args.source), load_audio(args.reference))
    save_audio(out, args.out)
    print(f"wrote {args.out} ({out.duration:.2f} s)")


def cmd_eval(args):
    manifest = Manifest.read(args.manifest)
    converter = VoiceConverter.from_file(args.checkpoint, force=args.force)
    report = evaluate(manifest, converter, build_asr_client(args.asr, manifest),
                      per_category=args.pairs)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text)
    print(text, end="")


def cmd_f0(args):
    track = extract_f0(load_audio(args.inp), args.method)
    with open(args.out, "w") as fh:
        fh.write("time_s\tf0_hz\tvoiced\n")
        for i, (f0, v) in enumerate(zip(track.f0_hz, track.voiced)):
            fh.write(f"{i * FRAME_PERIOD_S:.2f}\t{f0:.3f}\t{int(v)}\n")
    print(f"{len(track)} frames, {int(track.voiced.sum())} voiced -> {args.out}")


def cmd_demo_data(args):
    from hifivc.synth import write_corpus
    root = write_corpus(args.out, args.speakers, args.utts, args.duration, args.seed)
    print(f"synthetic corpus in {root}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hifivc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build a manifest and speaker split from a dataset directory")
    p.add_argument("dataset")
    p.add_argument("--out", default="manifest.tsv")
    p.add_argument("--holdout", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("init-config", help="write a default run config")
    p.add_argument("--preset", choices=("full", "small"), default="full")
    p.add_argument("--out", default="config.yaml")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("train")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--preset", choices=("full", "small"), default="full")
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--no-resume", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert")
    p.add_argument("--source", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="load despite a config hash mismatch")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("eval")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--asr", required=True, help="oracle | http(s)://host/path | cmd:<program>")
    p.add_argument("--pairs", type=int, default=None, help="pairs per gender category")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("f0", help="dump the 10 ms pitch track of a file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("builtin", "external"), default="builtin")
    p.set_defaults(func=cmd_f0)

    p = sub.add_parser("demo-data", help="write a small synthetic VCTK-shaped corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=8)
    p.add_argument("--utts", type=int, default=4)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    np.seterr(all="ignore")
    try:
        args.func(args)
    except (HifiVCError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
