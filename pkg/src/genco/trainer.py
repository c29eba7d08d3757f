"""Alternating co-training of one generator against WeCo and DaCo discriminators."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import binio, data, losses, metrics, nets, spectral
from . import tensor as T

log = logging.getLogger(__name__)

GEN = "G"
# stable per-network init ids so a network's start does not depend on which others exist
_NET_IDS = {"G": 0, "D1": 1, "D2": 2, "D3": 3}
_STREAMS = ("data", "latent", "mask")
_EVAL_TAG = 0x5EED
TAIL_EVALS = 5


class TrainingAborted(RuntimeError):
    """Raised on non-finite losses or gradients; names the last good checkpoint."""


class NonFiniteGradient(FloatingPointError):
    pass


# ---------------------------------------------------------------- config

@dataclass
class DataSpec:
    kind: str = "points2d"
    n_modes: int = 8
    n_train: int = 32
    n_holdout: int = 256
    size: int = 8
    family: str = "mixed"
    seed: int = 0
    fraction: float = 1.0

    def build(self) -> data.Dataset:
        return data.make_dataset(self.kind, n_modes=self.n_modes, n_train=self.n_train,
                                 n_holdout=self.n_holdout, size=self.size, family=self.family,
                                 seed=self.seed, fraction=self.fraction)


@dataclass
class TrainConfig:
    seed: int
    steps: int = 2000
    batch_size: int = 32
    latent_dim: int = 8
    P: float = 0.2
    n_bands: int = 64
    lam: float = 1.0
    wd_abs: bool = True
    ema_decay: float = 0.999
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    beta1: float = 0.0
    beta2: float = 0.99
    adam_eps: float = 1e-8
    n_disc: int = 2
    g_loss: str = "non-saturating"
    weco_on: bool = True
    daco_on: bool = True
    r_as_augmentation_only: bool = False
    eval_every: int = 100
    eval_samples: int = 4096
    data: DataSpec = field(default_factory=DataSpec)

    def validate(self) -> "TrainConfig":
        problems = []
        if not 0.0 <= self.P <= 1.0:
            problems.append(f"P={self.P} outside [0, 1]")
        if self.steps < 0:
            problems.append(f"steps={self.steps} must be >= 0")
        if self.batch_size < 2:
            problems.append(f"batch_size={self.batch_size} must be >= 2")
        if self.n_bands < 1:
            problems.append(f"n_bands={self.n_bands} must be >= 1")
        if self.weco_on and self.n_disc < 2:
            problems.append(f"n_disc={self.n_disc}: WeCo needs at least 2 discriminators")
        if self.r_as_augmentation_only and self.daco_on:
            problems.append("r_as_augmentation_only requires daco_on = false")
        if self.g_loss not in losses.GEN_MODES:
            problems.append(f"g_loss={self.g_loss!r} not in {losses.GEN_MODES}")
        if not 0.0 <= self.ema_decay <= 1.0:
            problems.append(f"ema_decay={self.ema_decay} outside [0, 1]")
        if self.eval_every < 1:
            problems.append(f"eval_every={self.eval_every} must be >= 1")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        d = dict(d)
        spec = DataSpec(**d.pop("data", {}))
        return cls(data=spec, **d)

    @property
    def weco_names(self) -> list[str]:
        if not self.weco_on:
            return ["D1"]
        return ["D1", "D2"] + [f"D{i + 2}" for i in range(2, self.n_disc)]

    @property
    def disc_names(self) -> list[str]:
        names = list(self.weco_names)
        if self.daco_on:
            names.insert(2 if self.weco_on else 1, "D3")
        return names


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def like(cls, arrays: list[np.ndarray], lr: float, beta1: float, beta2: float,
             eps: float) -> "AdamState":
        return cls(lr, beta1, beta2, eps, 0, [np.zeros_like(a) for a in arrays],
                   [np.zeros_like(a) for a in arrays])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState,
              names: list[str] | None = None) -> AdamState:
    """Bias-corrected Adam, updating ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: parameter, gradient and moment counts differ")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            label = names[i] if names else f"#{i}"
            raise NonFiniteGradient(f"non-finite gradient in parameter {label}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


# ---------------------------------------------------------------- state

def _net_seed(seed: int, name: str) -> np.random.SeedSequence:
    net_id = _NET_IDS.get(name, int(name[1:]) if name[1:].isdigit() else 99)
    return np.random.SeedSequence([seed, 7, net_id])


@dataclass
class TrainState:
    config: TrainConfig
    dataset: data.Dataset
    nets: dict[str, nets.NetworkParams]
    adam: dict[str, AdamState]
    ema: nets.EmaShadow
    bank: spectral.FilterBank
    rngs: dict[str, np.random.Generator]
    step: int = 0
    grad_norms: dict[str, float] = field(default_factory=dict)
    last_checkpoint: str | None = None

    @property
    def generator(self) -> nets.NetworkParams:
        return self.nets[GEN]

    def discriminators(self) -> dict[str, nets.NetworkParams]:
        return {k: v for k, v in self.nets.items() if k != GEN}

    def ema_generator(self) -> nets.NetworkParams:
        return self.ema.as_params(self.generator)


def init_state(config: TrainConfig, dataset: data.Dataset | None = None) -> TrainState:
    config.validate()
    ds = dataset if dataset is not None else config.data.build()
    dim = ds.dim
    g_arch = nets.generator_arch(config.latent_dim, dim, ds.is_image)
    d_arch = nets.discriminator_arch(dim)
    networks = {GEN: nets.init_network(g_arch, _net_seed(config.seed, GEN))}
    for name in config.disc_names:
        networks[name] = nets.init_network(d_arch, _net_seed(config.seed, name))
    adam = {}
    for name, p in networks.items():
        lr = config.lr_g if name == GEN else config.lr_d
        adam[name] = AdamState.like(p.arrays(), lr, config.beta1, config.beta2, config.adam_eps)
    streams = np.random.SeedSequence(config.seed).spawn(len(_STREAMS))
    rngs = {k: np.random.default_rng(s) for k, s in zip(_STREAMS, streams)}
    h, w, _ = ds.image_shape
    bank = spectral.build_filter_bank(h, w, config.n_bands)
    return TrainState(config, ds, networks, adam, nets.EmaShadow.of(networks[GEN], config.ema_decay),
                      bank, rngs)


@contextmanager
def _frozen(params: list[nets.NetworkParams]) -> Iterator[None]:
    tensors = [t for p in params for t in p.tensors()]
    for t in tensors:
        t.requires_grad = False
    try:
        yield
    finally:
        for t in tensors:
            t.requires_grad = True


# ---------------------------------------------------------------- losses per phase

def _reject(state: TrainState, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    bits = spectral.sample_rejection_masks(len(x), state.bank.n_bands, state.config.P, rng)
    shape = (len(x), *state.dataset.image_shape)
    return spectral.reject_and_reconstruct(x.reshape(shape), state.bank, bits).reshape(len(x), -1)


def discriminator_losses(state: TrainState, real: np.ndarray, fake: np.ndarray,
                         mask_rng: np.random.Generator) -> tuple[T.Tensor, losses.LossBundle]:
    """Objective minimized in the discriminator phase, plus its parts."""
    cfg, ds = state.config, state.nets
    x, f = T.Tensor(real), T.Tensor(fake)

    def logits(name, inp):
        return nets.forward(ds[name], inp)

    s1r, s1f = logits("D1", x), logits("D1", f)
    if cfg.r_as_augmentation_only:
        rx, rf = T.Tensor(_reject(state, real, mask_rng)), T.Tensor(_reject(state, fake, mask_rng))
        s1r = T.concat([s1r, logits("D1", rx)])
        s1f = T.concat([s1f, logits("D1", rf)])
    l_d1 = losses.adv_d_loss(s1r, s1f)
    bundle = losses.LossBundle(d1=l_d1)
    total = None
    if cfg.weco_on:
        names = cfg.weco_names
        flats = [nets.flatten_weights(ds[n]) for n in names]
        terms = losses.pairwise_terms(flats, cfg.lam, cfg.wd_abs)
        weco = l_d1
        for name, term in zip(names[1:], terms[1:]):
            l_j = T.add(losses.adv_d_loss(logits(name, x), logits(name, f)), term)
            if name == "D2":
                bundle.d2 = l_j
            weco = T.add(weco, l_j)
        bundle.wd = losses.weight_discrepancy(flats[0].detach(), flats[1].detach(), cfg.wd_abs)
        bundle.weco = weco
        total = weco
    if cfg.daco_on:
        rx, rf = _reject(state, real, mask_rng), _reject(state, fake, mask_rng)
        _, l_d3, daco = losses.daco_loss(s1r, s1f, logits("D3", T.Tensor(rx)), logits("D3", T.Tensor(rf)))
        bundle.d3 = l_d3
        bundle.daco = daco
        total = daco if total is None else T.add(total, daco)
    if total is None:
        total = l_d1
    return total, bundle


def generator_loss(state: TrainState, z: np.ndarray, mask_rng: np.random.Generator) -> T.Tensor:
    cfg, ds = state.config, state.nets
    gz = nets.forward(ds[GEN], T.Tensor(z))
    img_shape = state.dataset.image_shape

    def rejected():
        bits = spectral.sample_rejection_masks(len(z), state.bank.n_bands, cfg.P, mask_rng)
        return spectral.reject_tensor(gz, img_shape, state.bank, bits)

    s1 = nets.forward(ds["D1"], gz)
    if cfg.r_as_augmentation_only:
        s1 = T.concat([s1, nets.forward(ds["D1"], rejected())])
    paths = [s1]
    if cfg.weco_on:
        paths += [nets.forward(ds[n], gz) for n in cfg.weco_names[1:]]
    if cfg.daco_on:
        paths.append(nets.forward(ds["D3"], rejected()))
    return losses.generator_total_loss(paths, cfg.g_loss)


# ---------------------------------------------------------------- step

@dataclass
class MetricsRecord:
    step: int
    values: dict[str, float]


def _grad_norm(p: nets.NetworkParams) -> float:
    return float(np.sqrt(sum(float(np.sum(t.grad * t.grad)) for t in p.tensors())))


def _update(state: TrainState, name: str) -> None:
    p = state.nets[name]
    try:
        adam_step(p.arrays(), [t.grad for t in p.tensors()], state.adam[name],
                  [f"{name}/{n}" for n in p.names()])
    except NonFiniteGradient as exc:
        raise TrainingAborted(f"{exc} at step {state.step + 1}; "
                              f"last good checkpoint: {state.last_checkpoint or 'none'}") from exc


def _sample_real(state: TrainState, rng: np.random.Generator, n: int) -> np.ndarray:
    train = state.dataset.flat_train()
    return train[rng.integers(0, len(train), size=n)]


def train_step(state: TrainState) -> MetricsRecord:
    """One discriminator update followed by one generator update."""
    cfg = state.config
    b = cfg.batch_size
    g = state.generator
    discs = state.discriminators()

    # discriminator phase
    real = _sample_real(state, state.rngs["data"], b)
    z = state.rngs["latent"].standard_normal((b, cfg.latent_dim))
    fake = nets.predict(g, z)
    for p in discs.values():
        p.zero_grad()
    total_d, bundle = discriminator_losses(state, real, fake, state.rngs["mask"])
    _check_finite(state, "discriminator objective", total_d)
    T.backward(total_d)
    norms = {}
    for name, p in discs.items():
        norms[name] = _grad_norm(p)
        _update(state, name)

    # generator phase
    z = state.rngs["latent"].standard_normal((b, cfg.latent_dim))
    g.zero_grad()
    with _frozen(list(discs.values())):
        l_g = generator_loss(state, z, state.rngs["mask"])
    _check_finite(state, "generator loss", l_g)
    T.backward(l_g)
    norms[GEN] = _grad_norm(g)
    _update(state, GEN)
    nets.ema_update(state.ema, g)

    state.step += 1
    state.grad_norms = norms
    bundle.g_total = l_g
    return MetricsRecord(state.step, {**bundle.values(),
                                      **{f"grad_norm_{k}": v for k, v in norms.items()}})


def _check_finite(state: TrainState, what: str, value: T.Tensor) -> None:
    if not np.isfinite(value.data).all():
        last = state.last_checkpoint
        raise TrainingAborted(f"non-finite {what} at step {state.step + 1}; "
                              f"last good checkpoint: {last or 'none'}")


# ---------------------------------------------------------------- evaluation

CSV_COLUMNS = [
    "step", "loss_d1", "loss_d2", "loss_d3", "loss_wd", "loss_g_total",
    "score_real", "score_fake", "score_holdout", "gap_real_holdout", "gap_real_fake",
    "gap_ensemble",
    "grad_norm_G", "grad_norm_D1", "grad_norm_D2", "grad_norm_D3",
    "cos_d1_d2", "proxy_fid", "hist_real", "hist_fake", "hist_holdout",
]


def evaluate(state: TrainState) -> dict[str, Any]:
    """Metrics for the current state, drawn from an eval stream keyed on (seed, step)."""
    cfg, ds = state.config, state.dataset
    loss_rng, score_rng, gap_rng, ema_rng = (
        np.random.default_rng(s)
        for s in np.random.SeedSequence([cfg.seed, _EVAL_TAG, state.step]).spawn(4))
    rng = loss_rng
    b = cfg.batch_size
    real = _sample_real(state, rng, b)
    fake = nets.predict(state.generator, rng.standard_normal((b, cfg.latent_dim)))
    all_frozen = list(state.nets.values())
    with _frozen(all_frozen):
        _, bundle = discriminator_losses(state, real, fake, rng)
        bundle.g_total = generator_loss(state, rng.standard_normal((b, cfg.latent_dim)), rng)
    row: dict[str, Any] = {"step": state.step, **bundle.values()}

    d1 = state.nets["D1"]
    n_eval = cfg.eval_samples
    fake_eval = nets.predict(state.generator, score_rng.standard_normal((n_eval, cfg.latent_dim)))
    scores = {"real": nets.predict(d1, ds.flat_train()), "fake": nets.predict(d1, fake_eval),
              "holdout": nets.predict(d1, ds.flat_holdout())}
    row["score_real"] = float(scores["real"].mean())
    row["score_fake"] = float(scores["fake"].mean())
    row["score_holdout"] = float(scores["holdout"].mean())
    row["gap_real_holdout"] = row["score_real"] - row["score_holdout"]
    row["gap_real_fake"] = row["score_real"] - row["score_fake"]
    for name in ("G", "D1", "D2", "D3"):
        row[f"grad_norm_{name}"] = state.grad_norms.get(name, 0.0) if name in state.nets else float("nan")
    row["gap_ensemble"] = ensemble_gap(state, gap_rng)
    row["cos_d1_d2"] = weight_cosine(state, "D1", "D2") if "D2" in state.nets else float("nan")
    ema_fake = nets.predict(state.ema_generator(), ema_rng.standard_normal((n_eval, cfg.latent_dim)))
    row["proxy_fid"] = metrics.proxy_fid(ema_fake, ds.flat_holdout(),
                                         metrics.default_feature(ds.is_image))
    hist = metrics.score_histogram(scores)
    for pop in metrics.POPULATIONS:
        row[f"hist_{pop}"] = " ".join(str(c) for c in hist.row(pop))
    return row


def ensemble_gap(state: TrainState, rng: np.random.Generator) -> float:
    """Train-minus-holdout score gap averaged over every discriminator.

    D3 is scored on frequency-rejected views, the inputs it is trained on.
    """
    ds = state.dataset
    gaps = []
    for name, d in state.discriminators().items():
        train, hold = ds.flat_train(), ds.flat_holdout()
        if name == "D3":
            train, hold = _reject(state, train, rng), _reject(state, hold, rng)
        gaps.append(nets.predict(d, train).mean() - nets.predict(d, hold).mean())
    return float(np.mean(gaps))


def weight_cosine(state: TrainState, a: str, b: str) -> float:
    wa = np.concatenate([x.reshape(-1) for x in state.nets[a].arrays()])
    wb = np.concatenate([x.reshape(-1) for x in state.nets[b].arrays()])
    return float(wa @ wb / (np.linalg.norm(wa) * np.linalg.norm(wb)))


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def read_metrics_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(state: TrainState, path) -> None:
    arrays: dict[str, np.ndarray] = {}
    for key, p in state.nets.items():
        for (name, t), m, v in zip(p.entries, state.adam[key].m, state.adam[key].v):
            arrays[f"{key}/{name}"] = t.data
            arrays[f"adam/{key}/{name}/m"] = m
            arrays[f"adam/{key}/{name}/v"] = v
    for name, s in zip(state.generator.names(), state.ema.shadow):
        arrays[f"ema/{name}"] = s
    meta = {
        "format": "genco-checkpoint/1",
        "step": state.step,
        "config": state.config.to_dict(),
        "adam_t": {k: a.t for k, a in state.adam.items()},
        "rng": {k: r.bit_generator.state for k, r in state.rngs.items()},
        "grad_norms": state.grad_norms,
    }
    binio.save(path, arrays, meta)


def load_checkpoint(path, dataset: data.Dataset | None = None) -> TrainState:
    arrays, meta = binio.load(path)
    if meta.get("format") != "genco-checkpoint/1":
        raise binio.FormatError(f"{path}: not a checkpoint")
    state = init_state(TrainConfig.from_dict(meta["config"]), dataset)
    for key, p in state.nets.items():
        p.load_arrays([arrays[f"{key}/{n}"] for n in p.names()])
        a = state.adam[key]
        a.m = [arrays[f"adam/{key}/{n}/m"].copy() for n in p.names()]
        a.v = [arrays[f"adam/{key}/{n}/v"].copy() for n in p.names()]
        a.t = int(meta["adam_t"][key])
    state.ema.shadow = [arrays[f"ema/{n}"].copy() for n in state.generator.names()]
    for k, r in state.rngs.items():
        r.bit_generator.state = meta["rng"][k]
    state.step = int(meta["step"])
    state.grad_norms = {k: float(v) for k, v in meta["grad_norms"].items()}
    return state


# ---------------------------------------------------------------- experiment

def _tail_median(rows: list[dict[str, Any]], key: str) -> float:
    vals = [float(r[key]) for r in rows[-TAIL_EVALS:]]
    return float(np.median(vals)) if vals else float("nan")


def summarize(rows: list[dict[str, Any]], config: TrainConfig, wall: float) -> dict[str, Any]:
    last = rows[-1]
    return {
        "config": config.to_dict(),
        "steps_completed": last["step"],
        "final": {k: last[k] for k in CSV_COLUMNS if not k.startswith("hist_")},
        "proxy_fid_tail": _tail_median(rows, "proxy_fid"),
        "gap_tail": _tail_median(rows, "gap_real_holdout"),
        "gap_ensemble_tail": _tail_median(rows, "gap_ensemble"),
        "wall_time_s": wall,
    }


def run_experiment(config: TrainConfig, out_dir=None, *, resume=None,
                   dataset: data.Dataset | None = None,
                   stop_at: int | None = None) -> dict[str, Any]:
    """Train for ``config.steps`` steps, evaluating every ``eval_every`` steps.

    Writes ``metrics.csv``, ``summary.json`` and ``checkpoint.bin`` under
    ``out_dir`` when given. ``resume`` continues from a checkpoint (earlier
    metric rows are read back from ``out_dir/metrics.csv`` if present);
    ``stop_at`` ends early at that step, leaving a resumable checkpoint.
    """
    t0 = time.perf_counter()
    out = Path(out_dir) if out_dir is not None else None
    written: list[Path] = []
    ckpt = out / "checkpoint.bin" if out is not None else None
    try:
        if resume is not None:
            state = load_checkpoint(resume, dataset)
            state.config = replace(state.config, steps=config.steps)
            rows = _previous_rows(out, state.step)
        else:
            state = init_state(config, dataset)
            rows = [evaluate(state)]
        cfg = state.config
        end = cfg.steps if stop_at is None else min(stop_at, cfg.steps)
        while state.step < end:
            train_step(state)
            if state.step % cfg.eval_every == 0 or state.step == cfg.steps:
                rows.append(evaluate(state))
                if ckpt is not None and state.step < end:
                    save_checkpoint(state, ckpt)
                    state.last_checkpoint = str(ckpt)
                    if ckpt not in written:
                        written.append(ckpt)
        wall = time.perf_counter() - t0
        summary = summarize(rows, cfg, wall)
        if out is not None:
            for name, payload in (("metrics.csv", rows_to_csv(rows)),
                                  ("summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")):
                binio.atomic_write(out / name, payload)
                written.append(out / name)
            save_checkpoint(state, ckpt)
            written.append(ckpt)
        summary["rows"] = rows
        summary["state"] = state
        return summary
    except TrainingAborted:
        raise
    except Exception:
        for p in written:
            if p.exists():
                p.unlink()
        raise


def _previous_rows(out: Path | None, step: int) -> list[dict[str, Any]]:
    if out is None or not (out / "metrics.csv").exists():
        return []
    rows = []
    for r in read_metrics_csv(out / "metrics.csv"):
        if int(r["step"]) > step:
            break
        rows.append({k: _parse_cell(k, v) for k, v in r.items()})
    return rows


def _parse_cell(key: str, v: str) -> Any:
    if key == "step":
        return int(v)
    if key.startswith("hist_"):
        return v
    return float(v)
