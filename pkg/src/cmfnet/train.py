"""Adam + cosine-annealing training loop with exact-resume checkpoints."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math

import numpy as np

from . import checkpoint as ckpt_io
from .losses import LossConfig, evaluate_pair, loss_components
from .model import CMFNet, CmfnetConfig
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "lr", "loss", "psnr", "ssim")


class NonFiniteError(FloatingPointError):
    """Loss or parameters stopped being finite; ``info`` holds a diagnostic dump."""

    def __init__(self, message, info):
        super().__init__(f"{message}: {info}")
        self.info = info


@dataclasses.dataclass(frozen=True)
class Schedule:
    lr_max: float = 2e-4
    lr_min: float = 1e-6
    total_iters: int = 2000

    def __post_init__(self):
        if not self.lr_min < self.lr_max:
            raise ValueError("lr_min must be below lr_max")
        if self.total_iters < 1:
            raise ValueError("total_iters must be >= 1")


def cosine_lr(step, sched):
    """Half-cosine decay from ``lr_max`` at step 0 to ``lr_min`` at ``total_iters``."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    if step >= sched.total_iters:
        return sched.lr_min
    cos = math.cos(math.pi * step / sched.total_iters)
    return sched.lr_min + 0.5 * (sched.lr_max - sched.lr_min) * (1.0 + cos)


@dataclasses.dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, named_params, **kw):
        m = {name: np.zeros_like(p.data) for name, p in named_params}
        v = {name: np.zeros_like(a) for name, a in m.items()}
        return cls(m, v, **kw)


def adam_step(params, grads, state, lr):
    """Bias-corrected Adam update of ``params`` (name -> array) in place."""
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ValueError(f"no gradient for parameter {name!r}")
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


class Trainer:
    """Owns the model, optimizer state, data RNG and metrics log of one run."""

    def __init__(self, config=None, loss_cfg=None, sched=None, source=None, seed=0,
                 batch_size=2, init="uniform", clip_norm=None, eval_pair=None,
                 log_every=10, eval_every=100):
        self.config = config or CmfnetConfig()
        self.loss_cfg = loss_cfg or LossConfig()
        self.sched = sched or Schedule()
        self.source = source
        self.seed = seed
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.eval_pair = eval_pair
        self.log_every = max(1, log_every)
        self.eval_every = eval_every
        self.model = CMFNet(self.config, rng=np.random.default_rng([seed, 0]))
        if init == "zero":
            self.model.zero_()
        elif init != "uniform":
            raise ValueError(f"unknown init {init!r}")
        self.adam = AdamState.zeros_like(self.model.named_parameters())
        self.rng = np.random.default_rng([seed, 1])
        self.step = 0
        self.losses = []
        self.rows = []

    # -- single step -------------------------------------------------------
    def train_step(self):
        lr = cosine_lr(self.step, self.sched)
        degraded, clean = self.source.sample_batch(self.rng, self.batch_size)
        out = self.model(Tensor(degraded))
        parts = loss_components(out, Tensor(clean), self.loss_cfg)
        loss = parts["total"].item()
        if not math.isfinite(loss):
            raise NonFiniteError("non-finite loss", self._diagnostics(lr, parts))
        self.model.zero_grad()
        parts["total"].backward()
        named = dict(self.model.named_parameters())
        grads = {name: p.grad for name, p in named.items()}
        if self.clip_norm:
            clip_grad_norm(grads, self.clip_norm)
        adam_step({name: p.data for name, p in named.items()}, grads, self.adam, lr)
        for name, p in named.items():
            if not np.all(np.isfinite(p.data)):
                raise NonFiniteError(f"parameter {name} became non-finite", self._diagnostics(lr, parts))
        self.step += 1
        self.losses.append(loss)
        return loss, lr

    def _diagnostics(self, lr, parts):
        return {"step": self.step, "lr": lr, **{k: float(v.item()) for k, v in parts.items()}}

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, pair=None):
        pair = pair or self.eval_pair
        with no_grad():
            out = self.model(Tensor(pair.degraded[None]))
        return evaluate_pair(out.data[0], pair.clean)

    # -- loop ------------------------------------------------------------------
    def run(self, iters, checkpoint_path=None, checkpoint_every=0):
        for _ in range(iters):
            step = self.step
            loss, lr = self.train_step()
            done = self.step
            evaluate = self.eval_pair is not None and self.eval_every and done % self.eval_every == 0
            if done % self.log_every == 0 or evaluate:
                row = {"step": step, "lr": lr, "loss": loss, "psnr": None, "ssim": None}
                if evaluate:
                    row["psnr"], row["ssim"] = self.evaluate()
                self.rows.append(row)
                log.info("step %d lr %.3e loss %.6f%s", step, lr, loss,
                         f" psnr {row['psnr']:.2f} ssim {row['ssim']:.4f}" if evaluate else "")
            if checkpoint_path and checkpoint_every and done % checkpoint_every == 0:
                self.save(checkpoint_path)
        if checkpoint_path:
            self.save(checkpoint_path)
        return self

    # -- persistence --------------------------------------------------------------
    def to_checkpoint(self):
        params = {name: p.data for name, p in self.model.named_parameters()}
        moments = {}
        for name in params:
            moments[f"m/{name}"] = self.adam.m[name]
        for name in params:
            moments[f"v/{name}"] = self.adam.v[name]
        train = {
            "step": self.step,
            "seed": self.seed,
            "batch_size": self.batch_size,
            "clip_norm": self.clip_norm,
            "schedule": dataclasses.asdict(self.sched),
            "loss": {**dataclasses.asdict(self.loss_cfg), "kind": self.loss_cfg.kind.value},
            "adam": {"t": self.adam.t, "beta1": self.adam.beta1, "beta2": self.adam.beta2, "eps": self.adam.eps},
            "rng": self.rng.bit_generator.state,
        }
        return ckpt_io.Checkpoint(self.config, params, train, moments)

    def save(self, path):
        ckpt_io.save_checkpoint(path, self.to_checkpoint())

    @classmethod
    def from_checkpoint(cls, ckpt, source=None, eval_pair=None, log_every=10, eval_every=100):
        tr = ckpt.train
        trainer = cls(
            ckpt.config,
            LossConfig(**tr.get("loss", {})),
            Schedule(**tr.get("schedule", {})),
            source,
            seed=tr.get("seed", 0),
            batch_size=tr.get("batch_size", 2),
            clip_norm=tr.get("clip_norm"),
            eval_pair=eval_pair,
            log_every=log_every,
            eval_every=eval_every,
        )
        ckpt_io.load_params_into(trainer.model, ckpt.params)
        adam = tr.get("adam", {})
        trainer.adam.t = adam.get("t", 0)
        for key in ("beta1", "beta2", "eps"):
            if key in adam:
                setattr(trainer.adam, key, adam[key])
        for name in trainer.adam.m:
            if f"m/{name}" in ckpt.moments:
                trainer.adam.m[name] = np.array(ckpt.moments[f"m/{name}"], dtype=np.float32)
                trainer.adam.v[name] = np.array(ckpt.moments[f"v/{name}"], dtype=np.float32)
        if "rng" in tr:
            trainer.rng.bit_generator.state = tr["rng"]
        trainer.step = tr.get("step", 0)
        return trainer

    def log_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for row in self.rows:
            writer.writerow(["" if row[k] is None else repr(row[k]) for k in LOG_FIELDS])
        return buf.getvalue()


def train_loop(config, loss_cfg, sched, data_source, seed, iters, **kwargs):
    """Train a fresh model for ``iters`` steps and return the :class:`Trainer`.

    ``trainer.losses`` holds every step's loss; ``trainer.rows`` the periodic log.
    """
    if iters > sched.total_iters:
        raise ValueError(f"iters ({iters}) exceeds the schedule length ({sched.total_iters})")
    checkpoint_path = kwargs.pop("checkpoint_path", None)
    checkpoint_every = kwargs.pop("checkpoint_every", 0)
    trainer = Trainer(config, loss_cfg, sched, data_source, seed=seed, **kwargs)
    return trainer.run(iters, checkpoint_path, checkpoint_every)
