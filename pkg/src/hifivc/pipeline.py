"""Inference pipeline, dataset manifests and the objective evaluation suite."""

from __future__ import annotations

import json
import math
import random
import subprocess
import tempfile
import urllib.request
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np
import torch

from hifivc.audio import SAMPLE_RATE, Waveform, load_audio, save_audio
from hifivc.config import RunConfig
from hifivc.content import LinguisticEncoder, align_features, build_encoder, extract_content
from hifivc.errors import BiasGuardError, ConfigurationError, ContractError
from hifivc.f0 import encode_f0, extract_f0, normalize_f0
from hifivc.gan import generate
from hifivc.metrics import cer, pcc, wer
from hifivc.model import Predictor
from hifivc.objectives import Checkpoint
from hifivc.speaker import embed_speaker, sample_embedding

CATEGORIES = ("F2F", "F2M", "M2M", "M2F")


# ---------------------------------------------------------------- conversion

class VoiceConverter:
    """A read-only predictor restored from a checkpoint plus its content encoder."""

    def __init__(self, checkpoint: Checkpoint, encoder: LinguisticEncoder | None = None):
        self.config = checkpoint.run_config
        self.predictor = Predictor(self.config)
        self.predictor.load_state_dict(checkpoint.predictor)
        self.predictor.eval()
        c = self.config.content
        self.encoder = encoder or build_encoder(c.encoder, c.seed, c.dim, c.model_path, self.config.mel)

    @classmethod
    def from_file(cls, path, config: RunConfig | None = None, force: bool = False, encoder=None):
        return cls(Checkpoint.load(path, config, force=force), encoder)

    def convert(self, source: Waveform, reference: Waveform) -> Waveform:
        cfg = self.config
        content = extract_content(source, self.encoder)
        track = extract_f0(source, cfg.f0.method, threshold=cfg.f0.threshold)
        f0feat = encode_f0(normalize_f0(track), self.predictor.f0_encoder)
        content, f0feat = align_features(content, f0feat)
        posterior = embed_speaker(reference, self.predictor.speaker, cfg.mel)
        embedding = sample_embedding(posterior, "test")
        features = np.concatenate([content.features, f0feat.features], axis=1)
        return generate(features, embedding, self.predictor.generator)


def convert(source: Waveform, reference: Waveform, checkpoint: Checkpoint,
            encoder: LinguisticEncoder | None = None) -> Waveform:
    return VoiceConverter(checkpoint, encoder).convert(source, reference)


# ---------------------------------------------------------------- manifests

@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    speaker: str
    path: str
    transcript: str
    split: str = "train"


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    genders: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        ids = [e.utt_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ContractError("manifest utterance ids must be unique")

    @property
    def speakers(self) -> list[str]:
        return sorted({e.speaker for e in self.entries})

    def split(self, name: str) -> "Manifest":
        return Manifest([e for e in self.entries if e.split == name], dict(self.genders))

    def speakers_in(self, name: str) -> set[str]:
        return {e.speaker for e in self.entries if e.split == name}

    def write(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            for e in self.entries:
                text = " ".join(e.transcript.split())
                fh.write("\t".join([e.utt_id, e.speaker, e.path, text, e.split]) + "\n")
        with open(speakers_path(path), "w") as fh:
            for spk in self.speakers:
                fh.write(f"{spk}\t{self.genders.get(spk, 'U')}\n")

    @classmethod
    def read(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        entries = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                cols = line.rstrip("\n").split("\t")
                if len(cols) != 5:
                    raise ContractError(f"{path}:{lineno}: expected 5 tab-separated columns")
                entries.append(ManifestEntry(*cols))
        genders = {}
        side = speakers_path(path)
        if side.exists():
            for line in side.read_text().splitlines():
                if line.strip():
                    spk, gender = line.split("\t")
                    genders[spk] = gender
        return cls(entries, genders)


def speakers_path(manifest_path: Path) -> Path:
    return manifest_path.with_name(manifest_path.name + ".speakers")


def read_speaker_info(path: str | Path) -> dict[str, str]:
    """Speaker -> 'F' / 'M' / 'U' from a VCTK-style speaker-info table."""
    genders = {}
    for line in Path(path).read_text().splitlines()[1:]:
        cols = line.split()
        if len(cols) < 3:
            continue
        spk, gender = cols[0], cols[2].upper()
        gender = gender if gender in ("F", "M") else "U"
        genders[spk] = gender
        if not spk.startswith("p"):
            genders["p" + spk] = gender
    return genders


def scan_dataset(root: str | Path) -> Manifest:
    """Build a manifest from ``wav48*/<spk>/*.wav`` plus ``txt/<spk>/*.txt`` transcripts."""
    root = Path(root)
    wav_dirs = sorted(p for p in root.glob("wav48*") if p.is_dir())
    if not wav_dirs:
        raise ContractError(f"{root}: no wav48*/ directory found")
    entries = []
    for spk_dir in sorted(p for p in wav_dirs[0].iterdir() if p.is_dir()):
        for wav in sorted(spk_dir.glob("*.wav")):
            txt = root / "txt" / spk_dir.name / (wav.stem.split("_mic")[0] + ".txt")
            transcript = txt.read_text().strip() if txt.exists() else ""
            entries.append(ManifestEntry(wav.stem, spk_dir.name, str(wav.resolve()), transcript))
    info = root / "speaker-info.txt"
    genders = read_speaker_info(info) if info.exists() else {}
    spks = {e.speaker for e in entries}
    return Manifest(entries, {s: genders.get(s, "U") for s in spks})


def make_split(manifest: Manifest, holdout_speakers: int = 6, seed: int = 0) -> Manifest:
    """Move ``holdout_speakers`` whole speakers to the test split, gender-balanced when known."""
    speakers = manifest.speakers
    if len(speakers) < holdout_speakers + 2:
        raise ContractError(
            f"need at least {holdout_speakers + 2} speakers to hold out {holdout_speakers}"
        )
    rng = random.Random(seed)
    by_gender = {g: [s for s in speakers if manifest.genders.get(s) == g] for g in ("F", "M")}
    n_f = min(holdout_speakers // 2, len(by_gender["F"]))
    n_m = min(holdout_speakers - n_f, len(by_gender["M"]))
    n_f = min(holdout_speakers - n_m, len(by_gender["F"]))
    test = rng.sample(by_gender["F"], n_f) + rng.sample(by_gender["M"], n_m)
    rest = [s for s in speakers if s not in test]
    known_rest = [s for s in rest if manifest.genders.get(s) in ("F", "M")]
    unknown_rest = [s for s in rest if s not in known_rest]
    short = holdout_speakers - len(test)
    pool = known_rest if len(known_rest) >= short else known_rest + unknown_rest
    test += rng.sample(pool, short)
    test = set(test)
    entries = [replace(e, split="test" if e.speaker in test else "train") for e in manifest.entries]
    return Manifest(entries, dict(manifest.genders))


# ---------------------------------------------------------------- ASR clients

class ASRClient(Protocol):
    identifier: str

    def transcribe(self, waveform: Waveform, utterance_id: str | None = None) -> str: ...


class OracleASR:
    """Returns the reference transcript of the utterance being evaluated."""

    def __init__(self, transcripts: dict[str, str], identifier: str = "oracle"):
        self.transcripts = transcripts
        self.identifier = identifier

    def transcribe(self, waveform, utterance_id=None):
        return self.transcripts.get(utterance_id, "")


class HTTPASR:
    """POSTs 16-bit WAV bytes; expects a JSON body with a ``text`` field."""

    def __init__(self, url: str, identifier: str | None = None, timeout: float = 60.0):
        self.url = url
        self.identifier = identifier or url
        self.timeout = timeout

    def transcribe(self, waveform, utterance_id=None):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "audio.wav"
            save_audio(waveform, path)
            payload = path.read_bytes()
        req = urllib.request.Request(self.url, data=payload,
                                     headers={"Content-Type": "audio/wav"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode())["text"]


class CommandASR:
    """Runs ``command <wav-path>`` and reads the transcript from stdout."""

    def __init__(self, command: list[str], identifier: str | None = None):
        self.command = command
        self.identifier = identifier or " ".join(command)

    def transcribe(self, waveform, utterance_id=None):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "audio.wav"
            save_audio(waveform, path)
            out = subprocess.run([*self.command, str(path)], capture_output=True, text=True,
                                 check=True)
        return out.stdout.strip()


def build_asr_client(spec: str, manifest: Manifest | None = None) -> ASRClient:
    if spec == "oracle":
        if manifest is None:
            raise ConfigurationError("oracle ASR needs the manifest transcripts")
        return OracleASR({e.utt_id: e.transcript for e in manifest.entries})
    if spec.startswith(("http://", "https://")):
        return HTTPASR(spec)
    if spec.startswith("cmd:"):
        return CommandASR(spec[4:].split())
    raise ConfigurationError(f"unknown ASR client {spec!r} (use oracle, http(s)://..., cmd:...)")


# ---------------------------------------------------------------- evaluation

@dataclass
class CategoryResult:
    wer: float = math.nan
    cer: float = math.nan
    pcc: float = math.nan
    pairs: int = 0
    pcc_undefined: int = 0
    text_undefined: int = 0


@dataclass
class EvalReport:
    categories: dict[str, CategoryResult]
    mean: CategoryResult

    @property
    def wer(self) -> float:
        return self.mean.wer

    @property
    def cer(self) -> float:
        return self.mean.cer

    @property
    def pcc(self) -> float:
        return self.mean.pcc

    def to_text(self) -> str:
        rows = [f"{'Pair':<6}{'WER(%)':>9}{'CER(%)':>9}{'PCC':>8}{'pairs':>7}{'pcc_undef':>11}"]
        for name, r in [*self.categories.items(), ("Mean", self.mean)]:
            rows.append(f"{name:<6}{100 * r.wer:>9.1f}{100 * r.cer:>9.1f}{r.pcc:>8.2f}"
                        f"{r.pairs:>7d}{r.pcc_undefined:>11d}")
        return "\n".join(rows) + "\n"


def _aggregate(records: list[dict]) -> CategoryResult:
    if not records:
        return CategoryResult()
    def mean_of(key):
        vals = [r[key] for r in records if not math.isnan(r[key])]
        return float(np.mean(vals)) if vals else math.nan
    return CategoryResult(
        wer=mean_of("wer"), cer=mean_of("cer"), pcc=mean_of("pcc"), pairs=len(records),
        pcc_undefined=sum(math.isnan(r["pcc"]) for r in records),
        text_undefined=sum(math.isnan(r["wer"]) for r in records),
    )


def sample_pairs(manifest: Manifest, per_category: int, seed: int = 0):
    """(category, source entry, reference entry) with distinct speakers in each pair."""
    rng = random.Random(seed)
    test = [e for e in manifest.entries if e.split == "test"]
    by_gender = {g: [e for e in test if manifest.genders.get(e.speaker) == g] for g in ("F", "M")}
    pairs = []
    for cat in CATEGORIES:
        src_pool, ref_pool = by_gender[cat[0]], by_gender[cat[2]]
        candidates = [(s, r) for s in src_pool for r in ref_pool if s.speaker != r.speaker]
        if not candidates:
            continue
        for s, r in rng.sample(candidates, min(per_category, len(candidates))):
            pairs.append((cat, s, r))
    return pairs


def evaluate(manifest: Manifest, converter: VoiceConverter, asr_client: ASRClient,
             per_category: int | None = None, seed: int | None = None) -> EvalReport:
    if asr_client.identifier == converter.encoder.name:
        raise BiasGuardError(
            f"evaluation ASR {asr_client.identifier!r} is the content encoder; use a different model"
        )
    cfg = converter.config.eval
    per_category = cfg.pairs_per_category if per_category is None else per_category
    seed = cfg.seed if seed is None else seed
    records = {cat: [] for cat in CATEGORIES}
    cache: dict[str, Waveform] = {}

    def audio(entry):
        if entry.utt_id not in cache:
            cache[entry.utt_id] = load_audio(entry.path, SAMPLE_RATE)
        return cache[entry.utt_id]

    for cat, src, ref in sample_pairs(manifest, per_category, seed):
        source = audio(src)
        with torch.no_grad():
            out = converter.convert(source, audio(ref))
        hyp = asr_client.transcribe(out, utterance_id=src.utt_id)
        records[cat].append({
            "wer": wer(src.transcript, hyp),
            "cer": cer(src.transcript, hyp),
            "pcc": pcc(source, out, scale=cfg.pcc_scale, method=converter.config.f0.method),
        })
    everything = [r for recs in records.values() for r in recs]
    return EvalReport({cat: _aggregate(records[cat]) for cat in CATEGORIES}, _aggregate(everything))
