"""Supervised training of a built network on synthetic scenes."""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from ..arch import NetworkConfig, backward, forward, init_weights, save_config, save_weights
from ..arch.graph import NetworkGraph
from ..metrics import EvalOptions, MetricsReport, evaluate
from .optim import AdamState, adam_step, l1_loss
from .scenes import HOLDOUT_STREAM, TRAIN_STREAM, SceneConfig, make_batch

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def fit_output_range(config: NetworkConfig, scenes: SceneConfig) -> NetworkConfig:
    """Copy of ``config`` whose output map centres raw outputs on the depth range."""
    return dataclasses.replace(config, output_shift=(scenes.near + scenes.far) / 2,
                               output_scale=(scenes.far - scenes.near) / 2)


def eval_options(scenes: SceneConfig) -> EvalOptions:
    return EvalOptions(depth_clamp=(scenes.near * 0.5, scenes.far * 1.5),
                       invalid_threshold=min(1e-3, scenes.near * 0.5))


@dataclass
class EvalPoint:
    step: int
    loss: float
    metrics: MetricsReport

    def log_line(self) -> str:
        m = self.metrics
        return (f"step={self.step} loss={self.loss:.6f} abs_rel={m.abs_rel:.6f} "
                f"sq_rel={m.sq_rel:.6f} rmse={m.rmse:.6f} rmse_log={m.rmse_log:.6f} "
                f"log10={m.log10:.6f} delta1={m.delta1:.6f} delta2={m.delta2:.6f} "
                f"delta3={m.delta3:.6f}")


@dataclass
class TrainResult:
    weights: dict[str, np.ndarray]
    history: list[EvalPoint] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)

    @property
    def final(self) -> EvalPoint:
        return self.history[-1]


def holdout_set(scenes: SceneConfig, count: int = 64):
    return make_batch(scenes, HOLDOUT_STREAM, 0, count)


def predict(graph: NetworkGraph, weights, rgb, chunk: int = 16) -> np.ndarray:
    outs = [forward(graph, weights, rgb[i:i + chunk]) for i in range(0, rgb.shape[0], chunk)]
    return np.concatenate(outs)


def validate(graph, weights, rgb, depth, opts: EvalOptions) -> tuple[float, MetricsReport]:
    pred = predict(graph, weights, rgb)
    loss, _ = l1_loss(pred, depth)
    return loss, evaluate(pred, depth, opts)


def train(graph: NetworkGraph, scenes: SceneConfig, steps: int, batch: int = 8, seed: int = 0,
          weights: dict | None = None, lr: float = 5e-5, eval_every: int = 0,
          holdout: int = 64, run_dir: str | None = None) -> TrainResult:
    """Adam on masked L1 with fresh scenes every step.

    Evaluates on ``holdout`` held-out scenes at step 0, every ``eval_every``
    steps (0 disables intermediate evals) and at the end. With ``run_dir``
    set, writes the config, checkpoint, metric log and seed manifest there.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    weights = init_weights(graph, seed) if weights is None else {k: v.copy() for k, v in weights.items()}
    trainable = [p.name for p in graph.trainable()]
    state = AdamState(lr=lr)
    opts = eval_options(scenes)
    val_rgb, val_depth = holdout_set(scenes, holdout)
    result = TrainResult(weights)

    def record(step):
        loss, rep = validate(graph, weights, val_rgb, val_depth, opts)
        point = EvalPoint(step, loss, rep)
        result.history.append(point)
        log.info(point.log_line())

    record(0)
    for step in range(1, steps + 1):
        rgb, depth = make_batch(scenes, TRAIN_STREAM, (step - 1) * batch, batch)
        pred, tape = forward(graph, weights, rgb, training=True, record=True)
        loss, dpred = l1_loss(pred, depth)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss {loss} at step {step}")
        grads = backward(graph, weights, tape, dpred)
        bad = [n for n in trainable if not np.isfinite(grads[n]).all()]
        if bad:
            raise TrainingDiverged(f"non-finite gradient for {bad[0]} at step {step}")
        adam_step(state, weights, {n: grads[n] for n in trainable})
        weights.update(tape.stat_updates)
        result.losses.append(loss)
        if eval_every and step % eval_every == 0 and step != steps:
            record(step)
    if steps:
        record(steps)

    if run_dir is not None:
        write_run(run_dir, graph, result, scenes, steps, batch, seed, lr, holdout)
    return result


def write_run(run_dir, graph, result: TrainResult, scenes: SceneConfig, steps, batch, seed, lr,
              holdout=64):
    os.makedirs(run_dir, exist_ok=True)
    if graph.config is not None:
        save_config(graph.config, os.path.join(run_dir, "config.txt"))
    save_weights(graph, result.weights, os.path.join(run_dir, "weights.ndnw"))
    with open(os.path.join(run_dir, "metrics.log"), "w") as f:
        for p in result.history:
            f.write(p.log_line() + "\n")
    manifest = {
        "scene_seed": scenes.seed,
        "train_stream": TRAIN_STREAM,
        "train_scenes": [0, steps * batch],
        "holdout_stream": HOLDOUT_STREAM,
        "holdout_scenes": [0, holdout],
        "init_seed": seed,
        "steps": steps,
        "batch": batch,
        "lr": lr,
        "scene_config": dataclasses.asdict(scenes),
    }
    with open(os.path.join(run_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def median_baseline_rmse(depth: np.ndarray) -> float:
    """RMSE of predicting the held-out median depth at every pixel."""
    d = depth.astype(np.float64)
    return float(np.sqrt(np.mean((d - np.median(d)) ** 2)))
