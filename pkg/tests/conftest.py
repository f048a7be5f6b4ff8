import hashlib
import json
import time
from pathlib import Path

import numpy as np
import pytest

import sigweave as sw
from sigweave.losses import LossReport
from sigweave.model import ModelConfig, init_model
from sigweave.training import TrainConfig, TrainState, load_train_state, save_train_state, train

CACHE_VERSION = 2

# Frozen toy recipe for the trained-model criteria: 3x3 grid, 16x16 signals,
# noise 0.05, one held-out scenario, 5000 iterations. The learning rate is
# raised above the paper-scale default for the toy problem size.
TOY = {
    "schema": (("env", 3), ("person", 3)),
    "H": 16, "W": 16, "per_scenario": 10, "noise": 0.05,
    "gen_seed": 1, "split_seed": 2, "holdout": (2, 0),
}
TOY_MODEL = {
    "widths": (8, 16, 32, 64), "d": 100, "partition": (50, 50), "seed": 3,
}
TOY_TRAIN = {"iterations": 5000, "seed": 4, "log_every": 50, "learning_rate": 3e-4}


def build_toy_dataset():
    schema = sw.AttributeSchema(TOY["schema"])
    ds = sw.generate_toy_dataset(schema, TOY["H"], TOY["W"], TOY["per_scenario"],
                                 TOY["noise"], seed=TOY["gen_seed"])
    ds = sw.split_dataset(ds, 0.8, seed=TOY["split_seed"])
    existing, held = sw.hold_out_unseen(ds, [TOY["holdout"]])
    return existing, held


def toy_model_config():
    return ModelConfig(H=TOY["H"], W=TOY["W"], d=TOY_MODEL["d"],
                       partition=TOY_MODEL["partition"], widths=TOY_MODEL["widths"],
                       seed=TOY_MODEL["seed"])


def toy_train_config(**overrides):
    base = dict(TOY_TRAIN)
    base.update(overrides)
    return TrainConfig(**base)


def micro_state(seed: int = 11, jitter: float = 0.05):
    """Tiny float64 model for finite-difference checks; biases and gains are
    jittered off their exact init values so L1 kinks stay away from the
    perturbation radius."""
    cfg = ModelConfig(H=8, W=8, d=8, partition=(4, 4), widths=(2, 3, 4, 5),
                      fc_hidden=6, seed=seed, dtype="float64")
    st = init_model(cfg)
    rng = np.random.default_rng(seed + 1)
    for p in st.params.values():
        p.data = p.data + rng.normal(0.0, jitter, p.data.shape)
    return st


def rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-7)


def check_param_grads(state, loss_fn, n_per_tensor=4, h=1e-5, tol=1e-4, seed=0,
                      names=None):
    """Assert analytic grads of loss_fn() match central differences."""
    loss = loss_fn()
    state.zero_grad()
    loss.backward()
    picked = names or sorted(state.params)
    grads = {}
    for name in picked:
        p = state.params[name]
        grads[name] = p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in picked:
        p = state.params[name]
        flat = p.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(n_per_tensor, flat.size), replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            lp = float(loss_fn())
            flat[i] = orig - h
            lm = float(loss_fn())
            flat[i] = orig
            num = (lp - lm) / (2.0 * h)
            ana = float(grads[name].reshape(-1)[i])
            e = rel_err(ana, num)
            worst = max(worst, e)
            assert e <= tol, f"{name}[{i}]: analytic {ana:.3e} vs numeric {num:.3e} (rel {e:.2e})"
    return worst


@pytest.fixture(scope="session")
def toy_data():
    return build_toy_dataset()


@pytest.fixture(scope="session")
def toy_quads(toy_data):
    existing, _ = toy_data
    return sw.enumerate_quads(existing.existing_scenarios, existing.schema)


def _train_cache_dir() -> Path:
    recipe = json.dumps({"toy": {k: list(v) if isinstance(v, tuple) else v for k, v in TOY.items()},
                         "model": {k: list(v) if isinstance(v, tuple) else v for k, v in TOY_MODEL.items()},
                         "train": TOY_TRAIN, "v": CACHE_VERSION}, sort_keys=True)
    key = hashlib.sha256(recipe.encode()).hexdigest()[:16]
    return Path(__file__).parent / ".cache" / f"toy_model_{key}"


@pytest.fixture(scope="session")
def trained_bundle(toy_data, toy_quads):
    """(model, loss history, wall seconds) for the 5000-step toy run; cached."""
    existing, _ = toy_data
    cache = _train_cache_dir()
    log_path = cache / "losses.jsonl"
    meta_path = cache / "bench.json"
    if cache.is_dir() and log_path.is_file() and meta_path.is_file():
        model = load_train_state(cache).model
        history = [LossReport(**json.loads(line)) for line in log_path.read_text().splitlines()]
        seconds = json.loads(meta_path.read_text())["seconds"]
        return model, history, seconds
    cache.mkdir(parents=True, exist_ok=True)
    tstate = TrainState.fresh(init_model(toy_model_config()))
    t0 = time.time()
    model, history = train(existing, toy_quads, toy_train_config(), initial=tstate,
                           log_path=log_path)
    seconds = time.time() - t0
    save_train_state(tstate, cache)
    meta_path.write_text(json.dumps({"seconds": seconds}))
    return model, history, seconds


@pytest.fixture(scope="session")
def trained_model(trained_bundle):
    return trained_bundle[0]


@pytest.fixture(scope="session")
def untrained_model():
    return init_model(toy_model_config())
