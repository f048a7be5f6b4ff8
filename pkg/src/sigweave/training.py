"""Three-component training loop: per step draw a quad, evaluate the
reconstruction/exchange/synthesis terms, one Adam step for the generator
(encoder + decoder) and one for the discriminator.

Everything is seed-deterministic and resumable: the quad stream and the member
draws are pure functions of (seed, step), Adam state rides along in the
checkpoint, so an interrupted run continues bit-identically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, Sample, Scenario
from .errors import (
    CheckpointError,
    DivergenceError,
    InfeasibilityError,
    NumericError,
)
from .losses import LossReport, LossWeights, quad_step_terms
from .mci import MciQuad, quad_at
from .model import ModelConfig, ModelState, init_model, load_model, save_model

DIVERGENCE_CAP = 1e6

OPTIM_NAME = "optim.json"
TRAIN_META_NAME = "train_state.json"


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    iterations: int = 5000
    quads_per_step: int = 1
    seed: int = 0
    checkpoint_every: int = 0
    log_every: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.adam_beta1 < self.adam_beta2 < 1.0:
            raise ValueError(
                f"need 0 <= beta1 < beta2 < 1, got {self.adam_beta1}, {self.adam_beta2}"
            )
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.quads_per_step < 1:
            raise ValueError("quads_per_step must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


@dataclass
class TrainState:
    """Model plus Adam moments; ``t`` counts updates per parameter."""

    model: ModelState
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: dict[str, int]
    step: int = 0

    @classmethod
    def fresh(cls, model: ModelState) -> "TrainState":
        m = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        v = {k: np.zeros_like(p.data) for k, p in model.params.items()}
        t = {k: 0 for k in model.params}
        return cls(model=model, m=m, v=v, t=t, step=0)


class TrainPool:
    """Data-access boundary for training: only existing-scenario train samples.

    Construction asserts the isolation contract; nothing outside this pool is
    reachable from the training loop.
    """

    def __init__(self, dataset: Dataset):
        self.H, self.W = dataset.H, dataset.W
        self._by_scenario: dict[Scenario, list[Sample]] = {}
        for s in dataset.samples:
            assert s.scenario not in dataset.unseen_scenarios, (
                f"unseen scenario {s.scenario} leaked into the training pool"
            )
            if s.split != "train":
                continue
            self._by_scenario.setdefault(s.scenario, []).append(s)
        for members in self._by_scenario.values():
            members.sort(key=lambda s: s.id)

    def scenarios(self) -> set[Scenario]:
        return set(self._by_scenario)

    def pick(self, scenario: Scenario, rng: np.random.Generator) -> Sample:
        members = self._by_scenario[scenario]
        return members[int(rng.integers(len(members)))]


def adam_step(state: TrainState, grads: dict[str, np.ndarray], config: TrainConfig) -> TrainState:
    """Bias-corrected Adam update applied in place to the named parameters."""
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_eps, config.learning_rate
    for name in sorted(grads):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        p = state.model.params[name]
        state.t[name] += 1
        t = state.t[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / (1.0 - b1**t)
        v_hat = state.v[name] / (1.0 - b2**t)
        p.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
    return state


def _pick_members(pool: TrainPool, quad: MciQuad, seed: int, step: int, sub: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 7, step, sub])
    return np.stack([pool.pick(y, rng).signal for y in quad.members])


def _no_grad_floats(terms: dict) -> dict[str, float]:
    return {k: float(t.data) for k, t in terms.items()}


def train_step(tstate: TrainState, pool: TrainPool, quads: list[MciQuad],
               config: TrainConfig) -> dict[str, float]:
    """One optimization step; returns the scalar loss components."""
    model = tstate.model
    w = config.weights
    step = tstate.step

    acc: dict[str, object] = {}
    for sub in range(config.quads_per_step):
        quad = quad_at(quads, config.seed, step * config.quads_per_step + sub)
        signals = _pick_members(pool, quad, config.seed, step, sub)
        terms = quad_step_terms(model, quad, signals)
        for k, t in terms.items():
            acc[k] = t if k not in acc else acc[k] + t
    if config.quads_per_step > 1:
        scale = 1.0 / config.quads_per_step
        acc = {k: t * scale for k, t in acc.items()}

    j_gen = acc["j_exc_gen"] + w.gamma * acc["j_cyc"] + w.lam * acc["j_adv"]
    j_all = acc["j_recon"] + w.alpha * acc["j_exc"] + w.beta * j_gen

    floats = _no_grad_floats(acc)
    floats["j_all"] = float(j_all.data)
    for name, val in floats.items():
        if not math.isfinite(val) or abs(val) > DIVERGENCE_CAP:
            raise DivergenceError(f"loss {name} = {val} at step {step}", step=step)

    model.zero_grad()
    j_all.backward()
    acc["j_disc"].backward()

    gen_grads = {k: p.grad for k, p in model.gen_params().items() if p.grad is not None}
    disc_grads = {k: p.grad for k, p in model.disc_params().items() if p.grad is not None}
    adam_step(tstate, gen_grads, config)
    adam_step(tstate, disc_grads, config)

    tstate.step += 1
    model.iteration = tstate.step
    return floats


def train(
    dataset: Dataset,
    quads: list[MciQuad],
    config: TrainConfig,
    model_config: ModelConfig | None = None,
    initial: TrainState | None = None,
    log_path=None,
    checkpoint_dir=None,
) -> tuple[ModelState, list[LossReport]]:
    """Run the full loop from ``initial`` (or a fresh model) to config.iterations.

    Returns the trained model and one LossReport per logged step. When
    ``checkpoint_dir`` is set, numbered train-state checkpoints land there
    every ``checkpoint_every`` steps.
    """
    if not quads:
        raise InfeasibilityError("training needs at least one quad")
    pool = TrainPool(dataset)
    covered = pool.scenarios()
    for quad in quads:
        missing = [y for y in quad.members if y not in covered]
        if missing:
            raise InfeasibilityError(
                f"quad member scenario {missing[0]} has no train-split samples"
            )

    if initial is None:
        mc = model_config or ModelConfig(H=dataset.H, W=dataset.W)
        if (mc.H, mc.W) != (dataset.H, dataset.W):
            raise InfeasibilityError(
                f"model dims {mc.H}x{mc.W} do not match dataset {dataset.H}x{dataset.W}"
            )
        tstate = TrainState.fresh(init_model(mc))
    else:
        tstate = initial

    history: list[LossReport] = []
    log_file = open(log_path, "a") if log_path else None
    try:
        while tstate.step < config.iterations:
            step = tstate.step
            floats = train_step(tstate, pool, quads, config)
            if step % config.log_every == 0:
                report = LossReport.from_components(
                    step, config.weights, floats["j_recon"], floats["j_exc"],
                    floats["j_exc_gen"], floats["j_cyc"], floats["j_adv"],
                    floats["j_disc"],
                )
                history.append(report)
                if log_file:
                    log_file.write(json.dumps(report.to_json()) + "\n")
                    log_file.flush()
            if checkpoint_dir and config.checkpoint_every > 0 and tstate.step % config.checkpoint_every == 0:
                save_train_state(tstate, Path(checkpoint_dir) / f"step_{tstate.step:08d}")
    finally:
        if log_file:
            log_file.close()
    return tstate.model, history


# -- train-state checkpointing ---------------------------------------------------


def save_train_state(tstate: TrainState, path) -> None:
    """Model checkpoint plus Adam moments, enough to resume bit-identically."""
    path = Path(path)
    save_model(tstate.model, path)
    index = {}
    for name in sorted(tstate.m):
        for slot, store in (("m", tstate.m), ("v", tstate.v)):
            fname = f"optim.{name}.{slot}.f32"
            (path / fname).write_bytes(np.ascontiguousarray(store[name], dtype="<f4").tobytes())
        index[name] = {"shape": list(tstate.m[name].shape), "t": tstate.t[name]}
    (path / OPTIM_NAME).write_text(json.dumps(index, indent=1, sort_keys=True))
    (path / TRAIN_META_NAME).write_text(json.dumps({"step": tstate.step}))


def load_train_state(path) -> TrainState:
    path = Path(path)
    model = load_model(path)
    opath = path / OPTIM_NAME
    tpath = path / TRAIN_META_NAME
    if not opath.is_file() or not tpath.is_file():
        raise CheckpointError(f"{path} is a bare model checkpoint, not a train state")
    index = json.loads(opath.read_text())
    dt = model.config.np_dtype
    m, v, t = {}, {}, {}
    for name, p in model.params.items():
        if name not in index:
            raise CheckpointError(f"optimizer state missing for parameter {name!r}")
        shape = tuple(index[name]["shape"])
        if shape != p.data.shape:
            raise CheckpointError(f"optimizer tensor {name!r}: shape {shape} != {p.data.shape}")
        for slot, store in (("m", m), ("v", v)):
            fpath = path / f"optim.{name}.{slot}.f32"
            raw = fpath.read_bytes() if fpath.is_file() else None
            want = int(np.prod(shape)) * 4
            if raw is None or len(raw) != want:
                got = "missing" if raw is None else f"{len(raw)} bytes"
                raise CheckpointError(f"optimizer file for {name!r}.{slot}: {got}, expected {want} bytes")
            store[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(dt)
        t[name] = int(index[name]["t"])
    step = int(json.loads(tpath.read_text())["step"])
    return TrainState(model=model, m=m, v=v, t=t, step=step)
