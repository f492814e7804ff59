"""Training losses, learning-rate schedule, checkpoints and the alternating GAN trainer."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from hifivc.audio import MelSpectrogram, log_mel
from hifivc.config import LossWeights, RunConfig, TrainConfig
from hifivc.errors import CheckpointMismatchError, ContractError, TrainingDivergedError
from hifivc.model import build_models
from hifivc.speaker import kl_divergence

log = logging.getLogger("hifivc.train")

CHECKPOINT_VERSION = 1


def _as_tensor(x):
    if isinstance(x, MelSpectrogram):
        x = x.values
    return torch.as_tensor(x)


def rec_loss(m_source, m_pred) -> torch.Tensor:
    """Mean absolute difference between two log-mel spectrograms of equal shape."""
    a, b = _as_tensor(m_source), _as_tensor(m_pred)
    if a.shape != b.shape:
        raise ContractError(f"mel shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return torch.mean(torch.abs(a - b))


def _score(out):
    return torch.as_tensor(out.score if hasattr(out, "score") else out)


def adv_gen_loss(fake_outputs) -> torch.Tensor:
    if len(fake_outputs) == 0:
        raise ContractError("adversarial loss needs at least one discriminator output")
    return sum(torch.mean((_score(o) - 1.0) ** 2) for o in fake_outputs)


def adv_disc_loss(real_outputs, fake_outputs) -> torch.Tensor:
    if len(real_outputs) != len(fake_outputs):
        raise ContractError("real and fake discriminator lists differ in length")
    return sum(
        torch.mean((_score(r) - 1.0) ** 2) + torch.mean(_score(f) ** 2)
        for r, f in zip(real_outputs, fake_outputs)
    )


def fm_loss(real_outputs, fake_outputs) -> torch.Tensor:
    """Sum over sub-discriminators and layers of the per-element mean L1 feature gap."""
    if len(real_outputs) != len(fake_outputs):
        raise ContractError("real and fake discriminator lists differ in length")
    total = 0.0
    for r, f in zip(real_outputs, fake_outputs):
        if len(r.feature_maps) != len(f.feature_maps):
            raise ContractError("feature map counts differ")
        for a, b in zip(r.feature_maps, f.feature_maps):
            a, b = torch.as_tensor(a), torch.as_tensor(b)
            if a.shape != b.shape:
                raise ContractError(f"feature map shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
            total = total + torch.mean(torch.abs(a - b))
    return torch.as_tensor(total)


def total_predictor_loss(rec, advp, fm, spk, weights: LossWeights = LossWeights()):
    return (weights.lambda_rec * rec + weights.lambda_advp * advp
            + weights.lambda_fm * fm + weights.lambda_spk * spk)


def learning_rate(epoch: int, config: TrainConfig = TrainConfig()) -> float:
    return config.lr0 * config.gamma ** epoch


@dataclass
class Checkpoint:
    config: dict
    config_hash: str
    epoch: int
    step: int
    predictor: dict
    discriminators: dict
    optimizers: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def save(self, path: str | Path) -> None:
        # write-then-rename so a crash never leaves a truncated checkpoint behind
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            torch.save(self.__dict__, fh)
        os.replace(tmp, path)

    @classmethod
    def load(cls, path: str | Path, config: RunConfig | None = None, force: bool = False) -> "Checkpoint":
        data = torch.load(path, map_location="cpu", weights_only=False)
        if data.get("version") != CHECKPOINT_VERSION:
            raise CheckpointMismatchError(
                f"{path}: checkpoint version {data.get('version')} != {CHECKPOINT_VERSION}"
            )
        ckpt = cls(**data)
        stored = RunConfig.from_dict(ckpt.config)
        if stored.architecture_hash() != ckpt.config_hash and not force:
            raise CheckpointMismatchError(f"{path}: stored config does not match its hash")
        if config is not None and config.architecture_hash() != ckpt.config_hash and not force:
            raise CheckpointMismatchError(
                f"{path}: config hash {config.architecture_hash()} != checkpoint {ckpt.config_hash}"
            )
        return ckpt

    @property
    def run_config(self) -> RunConfig:
        return RunConfig.from_dict(self.config)


class Trainer:
    """Owns every mutable parameter; the content encoder stays outside the optimiser."""

    def __init__(self, config: RunConfig, content_encoder=None):
        self.config = config
        tc = config.train
        torch.manual_seed(tc.seed)
        self.predictor, self.discriminators = build_models(config)
        self.opt_g = torch.optim.Adam(self.predictor.parameters(), lr=tc.lr0, betas=tc.betas)
        self.opt_d = torch.optim.Adam(self.discriminators.parameters(), lr=tc.lr0, betas=tc.betas)
        self.noise = torch.Generator().manual_seed(tc.seed)
        self.epoch = 0
        self.step = 0
        self.best_val = math.inf
        if content_encoder is not None and hasattr(content_encoder, "parameters"):
            frozen = {id(p) for p in content_encoder.parameters()}
            if frozen & {id(p) for p in self.optimized_parameters()}:
                raise ContractError("content encoder parameters must not be optimised")

    def optimized_parameters(self):
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                yield from group["params"]

    def set_epoch(self, epoch: int) -> float:
        self.epoch = epoch
        lr = learning_rate(epoch, self.config.train)
        for opt in (self.opt_g, self.opt_d):
            for group in opt.param_groups:
                group["lr"] = lr
        return lr

    def _check(self, report: dict, keys):
        bad = [k for k in keys if not math.isfinite(report[k])]
        if bad:
            raise TrainingDivergedError(f"non-finite loss ({', '.join(bad)})", report)

    def train_step(self, batch) -> dict:
        w = self.config.weights
        mel_cfg = self.config.mel
        self.predictor.train()
        self.discriminators.train()
        real = batch.audio[:, None]
        noise = torch.randn(real.shape[0], self.config.speaker.dim, generator=self.noise)
        fake, mu, log_var = self.predictor(batch.content, batch.f0, batch.summary, noise)
        fake = fake[..., : real.shape[-1]]
        report = {"step": self.step, "epoch": self.epoch, "lr": self.opt_g.param_groups[0]["lr"]}

        loss_d = adv_disc_loss(self.discriminators(real), self.discriminators(fake.detach()))
        report["disc"] = loss_d.item()
        self._check(report, ["disc"])
        self.opt_d.zero_grad(set_to_none=True)
        loss_d.backward()
        self.opt_d.step()

        rec = rec_loss(log_mel(real[:, 0], mel_cfg), log_mel(fake[:, 0], mel_cfg))
        spk = kl_divergence(mu, log_var).mean()
        if w.lambda_advp or w.lambda_fm:
            fake_out = self.discriminators(fake)
            with torch.no_grad():
                real_out = self.discriminators(real)
            advp = adv_gen_loss(fake_out)
            fm = fm_loss(real_out, fake_out)
        else:
            advp = fm = torch.zeros(())
        total = total_predictor_loss(rec, advp, fm, spk, w)
        report.update(rec=rec.item(), advp=advp.item(), fm=fm.item(), spk=spk.item(), total=total.item())
        self._check(report, ["rec", "advp", "fm", "spk", "total"])
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        self.step += 1
        log.info(json.dumps(report))
        return report

    @torch.no_grad()
    def validation_loss(self, batches) -> float:
        self.predictor.eval()
        losses = []
        for batch in batches:
            fake, _, _ = self.predictor(batch.content, batch.f0, batch.summary)
            real = batch.audio
            fake = fake[:, 0, : real.shape[-1]]
            losses.append(float(rec_loss(log_mel(real, self.config.mel), log_mel(fake, self.config.mel))))
        return float(np.mean(losses)) if losses else math.nan

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config.to_dict(),
            config_hash=self.config.architecture_hash(),
            epoch=self.epoch,
            step=self.step,
            predictor=self.predictor.state_dict(),
            discriminators=self.discriminators.state_dict(),
            optimizers={"g": self.opt_g.state_dict(), "d": self.opt_d.state_dict()},
            extra={"noise_state": self.noise.get_state(), "best_val": self.best_val},
        )

    def restore(self, ckpt: Checkpoint) -> None:
        self.predictor.load_state_dict(ckpt.predictor)
        self.discriminators.load_state_dict(ckpt.discriminators)
        if ckpt.optimizers:
            self.opt_g.load_state_dict(ckpt.optimizers["g"])
            self.opt_d.load_state_dict(ckpt.optimizers["d"])
        if "noise_state" in ckpt.extra:
            self.noise.set_state(ckpt.extra["noise_state"])
        self.best_val = ckpt.extra.get("best_val", math.inf)
        self.epoch = ckpt.epoch
        self.step = ckpt.step


def train_loop(dataset, config: RunConfig, out_dir: str | Path, validation=None,
               content_encoder=None, resume: bool = True) -> Checkpoint:
    """Run (or resume) training, writing ``epoch_NNNN.pt``, ``last.pt`` and ``best.pt``."""
    if len(dataset) == 0:
        raise ContractError("training manifest is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tc = config.train
    trainer = Trainer(config, content_encoder)
    start = 0
    last = out_dir / "last.pt"
    if resume and last.exists():
        trainer.restore(Checkpoint.load(last, config))
        start = trainer.epoch + 1
    ckpt = trainer.checkpoint() if start >= tc.epochs else None
    for epoch in range(start, tc.epochs):
        trainer.set_epoch(epoch)
        rng = np.random.default_rng([tc.seed, epoch])
        for batch in dataset.batches(tc.batch_size, rng, tc.steps_per_epoch):
            trainer.train_step(batch)
        if validation is not None:
            val_rng = np.random.default_rng([tc.seed, 10**6])
            val = trainer.validation_loss(validation.batches(tc.batch_size, val_rng))
        else:
            val = math.nan
        improved = not math.isnan(val) and val < trainer.best_val
        if improved:
            trainer.best_val = val
        ckpt = trainer.checkpoint()
        try:
            ckpt.save(out_dir / f"epoch_{epoch:04d}.pt")
            ckpt.save(last)
            if improved or validation is None:
                ckpt.save(out_dir / "best.pt")
        except OSError as exc:
            raise OSError(f"epoch {epoch}: failed to write checkpoint in {out_dir}: {exc}") from exc
        log.info(json.dumps({"epoch": epoch, "val_rec": val, "lr": learning_rate(epoch, tc)}))
    return ckpt
