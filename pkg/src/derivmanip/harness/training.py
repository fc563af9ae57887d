"""Training loop, evaluation, label correction and sweeps."""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .. import core_math, data, edf, network, optim
from ..errors import ConfigError, DivergenceError, InvalidInputError
from .config import RunConfig, WeightScheme, resolved_lines

log = logging.getLogger(__name__)

METRICS_HEADER = [
    "iter",
    "acc_train_corrupted",
    "acc_train_intact",
    "acc_val",
    "mean_p_clean",
    "mean_p_noisy",
    "mean_weight",
    "emphasis_variance",
    "lr",
]

# independent random substreams; toggling one feature never shifts another
STREAMS = {"data": 0, "split": 1, "corruption": 2, "init": 3, "dropout": 4, "shuffle": 5, "imbalance": 6}


def substream(seed: int, name: str, *extra: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],) + tuple(extra))


@dataclass
class MetricsRow:
    iteration: int
    acc_train_corrupted: float
    acc_train_intact: float
    acc_val: float
    mean_p_clean: Optional[float]
    mean_p_noisy: Optional[float]
    mean_weight: float
    emphasis_variance: float
    learning_rate: float

    def as_csv(self) -> list:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return [str(self.iteration)] + [
            fmt(v)
            for v in (
                self.acc_train_corrupted,
                self.acc_train_intact,
                self.acc_val,
                self.mean_p_clean,
                self.mean_p_noisy,
                self.mean_weight,
                self.emphasis_variance,
                self.learning_rate,
            )
        ]


@dataclass
class RunResult:
    history: List[MetricsRow]
    best_val: float
    best_iteration: int
    final_val: float
    checkpoint_path: Optional[str] = None
    net: Optional[network.Mlp] = field(default=None, repr=False)
    train: Optional[data.Dataset] = field(default=None, repr=False)
    val: Optional[data.Dataset] = field(default=None, repr=False)

    @property
    def final(self) -> MetricsRow:
        return self.history[-1]


class GradientSynthesizer:
    """Per-example logit gradients and weights for one weighting scheme.

    The EDF normalizer is computed once here and frozen for the run.
    """

    def __init__(self, scheme: WeightScheme, quad_points: int = edf.DEFAULT_QUAD_POINTS):
        self.scheme = scheme
        self.scale = 1.0
        self.edf = None
        if scheme.mode == "dn":
            self.scale = edf.dn_scale(scheme.loss, quad_points)
        elif scheme.mode == "dm":
            self.edf = edf.make_edf(scheme.family, quad_points)

    def __call__(self, probs, labels):
        """Return (logit gradients (N, C), per-example weights (N,))."""
        py = core_math.target_prob(probs, labels)
        if self.edf is not None:
            return edf.dm_grad_logits(probs, labels, self.edf), edf.edf_normalized(self.edf, py)
        loss = self.scheme.loss
        g = core_math.grad_logits(loss, probs, labels)
        w = core_math.weight_magnitude(loss, py)
        if self.scale != 1.0:
            g = g * self.scale
            w = w * self.scale
        return g, w


def prepare_data(config: RunConfig):
    """Build (train, val) from the config: load/generate, imbalance, split, corrupt."""
    seed = config.seed
    if config.data_source == "file":
        full = data.load_dataset(config.data_path, config.data_format, config.class_count)
    else:
        dseed = config.synthetic_seed if config.synthetic_seed is not None else substream(seed, "data")
        full = data.gen_synthetic(config.synthetic, seed=dseed)
    if config.imbalance:
        full = data.subsample_imbalance(full, list(config.imbalance), substream(seed, "imbalance"))
    train, val = data.split(full, config.train_fraction, substream(seed, "split"))
    c = config.corruption
    if c.kind == "symmetric":
        train = data.corrupt_symmetric(train, c.r, substream(seed, "corruption"))
    elif c.kind == "asymmetric":
        train = data.corrupt_asymmetric(train, c.pairs, c.r, substream(seed, "corruption"))
    return train, val


def accuracy(pred, labels) -> Optional[float]:
    if len(labels) == 0:
        return None
    return float(np.mean(pred == labels))


def eval_subsets(net: network.Mlp, dataset: data.Dataset):
    """Accuracy vs observed labels, vs clean labels, on the clean subset and
    on the noisy subset. Empty subsets give None."""
    pred, _ = network.predict(net, dataset.features)
    flags = dataset.corrupted_flags
    return (
        accuracy(pred, dataset.observed_labels),
        accuracy(pred, dataset.clean_labels),
        accuracy(pred[~flags], dataset.observed_labels[~flags]),
        accuracy(pred[flags], dataset.observed_labels[flags]),
    )


def track_pi_dynamics(probs, observed_labels, flags):
    """Mean probability of the observed label over clean and noisy examples."""
    py = core_math.target_prob(np.asarray(probs), np.asarray(observed_labels))
    flags = np.asarray(flags, dtype=bool)
    clean = float(py[~flags].mean()) if (~flags).any() else None
    noisy = float(py[flags].mean()) if flags.any() else None
    return clean, noisy


class BatchSampler:
    """Epoch-wise full permutations drawn from the shuffling substream."""

    def __init__(self, n: int, batch_size: int, seed: int):
        if batch_size > n:
            raise ConfigError(f"batch size {batch_size} exceeds training set size {n}")
        self.n, self.batch_size, self.seed = n, batch_size, seed
        self.epoch, self.pos = -1, n
        self.order = None

    def next(self) -> np.ndarray:
        if self.pos + self.batch_size > self.n:
            self.epoch += 1
            self.order = np.random.default_rng(substream(self.seed, "shuffle", self.epoch)).permutation(self.n)
            self.pos = 0
        idx = self.order[self.pos : self.pos + self.batch_size]
        self.pos += self.batch_size
        return idx


def _evaluate(net, train, val, it, weights, lr) -> MetricsRow:
    cache = network.forward(net, train.features, train_mode=False)
    pred = np.argmax(cache.logits, axis=1)
    p_clean, p_noisy = track_pi_dynamics(cache.probs, train.observed_labels, train.corrupted_flags)
    val_pred, _ = network.predict(net, val.features)
    return MetricsRow(
        iteration=it,
        acc_train_corrupted=accuracy(pred, train.observed_labels),
        acc_train_intact=accuracy(pred, train.clean_labels),
        acc_val=accuracy(val_pred, val.observed_labels),
        mean_p_clean=p_clean,
        mean_p_noisy=p_noisy,
        mean_weight=float(np.mean(weights)),
        emphasis_variance=edf.emphasis_variance(weights),
        learning_rate=lr,
    )


def run_training(config: RunConfig, train: data.Dataset = None, val: data.Dataset = None) -> RunResult:
    """Train one network as described by ``config``.

    ``train``/``val`` override the datasets the config would build (used by
    label correction). When ``config.output_dir`` is set, writes
    metrics.csv, run_meta.txt, best.dmf and final.dmf there.
    """
    config.validate()
    if train is None or val is None:
        built_train, built_val = prepare_data(config)
        train = built_train if train is None else train
        val = built_val if val is None else val
    seed = config.seed
    dims = [train.feature_dim, *config.hidden, train.class_count]
    net = network.init_mlp(dims, config.activation, config.dropout, substream(seed, "init"))
    params = net.params()
    state = optim.make_optimizer(config.optimizer, [p.shape for p in params])
    synth = GradientSynthesizer(config.scheme, config.quad_points)
    sampler = BatchSampler(len(train), config.batch_size, seed)

    out = config.output_dir
    metrics_fh = writer = None
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "run_meta.txt"), "w", encoding="utf-8") as fh:
            fh.write("\n".join(resolved_lines(config)) + "\n")
            fh.write(f"dims = {dims}\ntrain_size = {len(train)}\nval_size = {len(val)}\n")
            fh.write(f"train_noise_fraction = {float(train.corrupted_flags.mean())!r}\n")
            if synth.edf is not None:
                fh.write(f"edf.Z = {synth.edf.Z!r}\n")
            if synth.scale != 1.0:
                fh.write(f"dn_scale = {synth.scale!r}\n")
        metrics_fh = open(os.path.join(out, "metrics.csv"), "w", newline="", encoding="utf-8")
        writer = csv.writer(metrics_fh)
        writer.writerow(METRICS_HEADER)
        metrics_fh.flush()

    history: List[MetricsRow] = []
    best_val, best_it, best_path = -1.0, 0, None
    try:
        for it in range(config.iterations):
            idx = sampler.next()
            rng = np.random.default_rng(substream(seed, "dropout", it))
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    cache = network.forward(net, train.features[idx], train_mode=True, rng=rng)
            except InvalidInputError:
                raise DivergenceError(f"non-finite logits at iteration {it + 1}") from None
            grads_z, weights = synth(cache.probs, train.observed_labels[idx])
            grads = network.backward(net, cache, grads_z)
            lr = optim.lr_at(config.schedule, config.optimizer.lr, it)
            optim.step(config.optimizer, state, params, grads, lr=lr)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise DivergenceError(f"non-finite parameters after iteration {it + 1}")
            done = it + 1
            if done % config.eval_every == 0 or done == config.iterations:
                row = _evaluate(net, train, val, done, weights, lr)
                history.append(row)
                if writer:
                    writer.writerow(row.as_csv())
                    metrics_fh.flush()
                if row.acc_val > best_val:
                    best_val, best_it = row.acc_val, done
                    if out:
                        best_path = os.path.join(out, "best.dmf")
                        network.save_checkpoint(net, best_path)
    finally:
        if metrics_fh:
            metrics_fh.close()

    final_path = None
    if out:
        final_path = os.path.join(out, "final.dmf")
        network.save_checkpoint(net, final_path)
    return RunResult(
        history=history,
        best_val=best_val,
        best_iteration=best_it,
        final_val=history[-1].acc_val,
        checkpoint_path=final_path,
        net=net,
        train=train,
        val=val,
    )


def relabel(net: network.Mlp, dataset: data.Dataset) -> data.Dataset:
    """Replace observed labels by the network's predictions."""
    pred, _ = network.predict(net, dataset.features)
    return dataset.with_labels(pred)


def label_correct_and_retrain(config: RunConfig, trained_net: network.Mlp) -> RunResult:
    """Relabel the config's training set with ``trained_net`` and retrain from
    scratch with the same config (hyperparameters unchanged)."""
    train, val = prepare_data(config)
    return run_training(config, train=relabel(trained_net, train), val=val)


SWEEP_HEADER = ["scheme", "lambda", "beta", "mode", "seed", "best_val", "final_val", "error"]


def _sweep_one(config: RunConfig) -> dict:
    s = config.scheme
    lam = beta = None
    if s.mode == "dm":
        names = edf.FAMILY_PARAMS[s.family.tag]
        lam = s.family.param("lambda") if "lambda" in names else None
        beta = s.family.param("beta") if "beta" in names else None
    row = {"scheme": s.describe(), "lambda": lam, "beta": beta, "seed": config.seed,
           "mode": None, "best_val": None, "final_val": None, "error": ""}
    try:
        row["mode"] = s.emphasis_mode
        res = run_training(config)
        row["best_val"], row["final_val"] = res.best_val, res.final_val
    except Exception as exc:  # one failed run must not stop the sweep
        log.warning("sweep run %s failed: %s", s.describe(), exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _sort_key(row):
    def k(v):
        return (v is None, -math.inf if v is None else v)

    return (k(row["lambda"]), k(row["beta"]), row["scheme"], row["seed"])


def sweep(configs: List[RunConfig], workers: int = 1) -> List[dict]:
    """Run every config; one row per run, sorted by (lambda, beta)."""
    if not configs:
        return []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            rows = list(pool.map(_sweep_one, configs))
    else:
        rows = [_sweep_one(c) for c in configs]
    return sorted(rows, key=_sort_key)


def write_sweep_csv(rows: List[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow(["" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k])
                             for k in SWEEP_HEADER])


def unified_grid(config: RunConfig, grid) -> List[RunConfig]:
    """Configs for a list of (lambda, beta) points on the unified family."""
    return [
        replace(config, scheme=WeightScheme("dm", family=edf.unified(lam, beta)))
        for lam, beta in grid
    ]


def export_edf_curve(family, n_points: int, path, quad_points: int = edf.DEFAULT_QUAD_POINTS) -> edf.Edf:
    e = edf.make_edf(family, quad_points)
    edf.export_curve(e, n_points, path)
    return e
