"""Shared autoencoder + discriminator with a partitioned latent code.

Encoder: four stride-2 conv stages (conv / instance norm / relu), one residual
block, then three fully connected layers onto a d-dimensional code whose
segments each govern one attribute. Decoder mirrors it (fully connected,
residual, four upsample-conv stages, logistic output in (0,1)). The
discriminator is a plain conv stack with a logistic head.

Inputs whose sides are not multiples of 16 are zero-padded up to the next
multiple internally and cropped back on the way out.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CheckpointError, ShapeError
from .nn import tensor as T
from .nn.tensor import Tensor

IN_EPS = 1e-5
CHECKPOINT_NAME = "model.json"
CHECKPOINT_VERSION = 1


def even_partition(P: int, d: int) -> tuple[int, ...]:
    """Split d latent dims as evenly as possible; remainder goes last."""
    base = d // P
    if base < 1:
        raise ShapeError(f"latent dim {d} too small for {P} segments")
    parts = [base] * P
    parts[-1] += d - base * P
    return tuple(parts)


@dataclass(frozen=True)
class ModelConfig:
    H: int = 128
    W: int = 128
    d: int = 100
    partition: tuple[int, ...] = (50, 50)
    widths: tuple[int, int, int, int] = (32, 64, 128, 256)
    fc_hidden: int = 0  # 0 -> widths[-1]
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "partition", tuple(int(v) for v in self.partition))
        object.__setattr__(self, "widths", tuple(int(v) for v in self.widths))
        if self.fc_hidden == 0:
            object.__setattr__(self, "fc_hidden", int(self.widths[-1]))
        if sum(self.partition) != self.d:
            raise ShapeError(f"partition {self.partition} does not sum to d={self.d}")
        if any(v < 1 for v in self.partition):
            raise ShapeError(f"partition {self.partition} has empty segments")
        if len(self.widths) != 4:
            raise ShapeError("widths must list the four conv stage widths")
        if self.H < 1 or self.W < 1:
            raise ShapeError(f"bad input dims {self.H}x{self.W}")
        if self.dtype not in ("float32", "float64"):
            raise ShapeError(f"dtype must be float32|float64, got {self.dtype}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def padded(self) -> tuple[int, int]:
        return (math.ceil(self.H / 16) * 16, math.ceil(self.W / 16) * 16)

    @property
    def pads(self) -> tuple[int, int, int, int]:
        """(top, bottom, left, right) zero padding applied before the convs."""
        Hp, Wp = self.padded
        dh, dw = Hp - self.H, Wp - self.W
        return (dh // 2, dh - dh // 2, dw // 2, dw - dw // 2)

    @property
    def bottleneck(self) -> tuple[int, int, int]:
        Hp, Wp = self.padded
        return (self.widths[3], Hp // 16, Wp // 16)


@dataclass
class LatentCode:
    """d-dimensional code split into one segment per attribute."""

    values: np.ndarray
    partition: tuple[int, ...]

    def __post_init__(self):
        self.partition = tuple(int(v) for v in self.partition)
        self.values = np.asarray(self.values)
        if self.values.ndim != 1 or self.values.size != sum(self.partition):
            raise ShapeError(
                f"code of length {self.values.size} does not fit partition {self.partition}"
            )

    def segment(self, p: int) -> np.ndarray:
        a, b = segment_bounds(self.partition, p)
        return self.values[a:b]


def segment_bounds(partition: tuple[int, ...], p: int) -> tuple[int, int]:
    if not 0 <= p < len(partition):
        raise ShapeError(f"attribute index {p} out of range for partition {partition}")
    start = sum(partition[:p])
    return start, start + partition[p]


def exchange(z_i: LatentCode, z_j: LatentCode, p: int) -> tuple[LatentCode, LatentCode]:
    """Swap segment p between two codes; all other segments untouched."""
    if z_i.partition != z_j.partition:
        raise ShapeError(f"partition mismatch: {z_i.partition} vs {z_j.partition}")
    a, b = segment_bounds(z_i.partition, p)
    vi = z_i.values.copy()
    vj = z_j.values.copy()
    vi[a:b], vj[a:b] = z_j.values[a:b], z_i.values[a:b]
    return (LatentCode(vi, z_i.partition), LatentCode(vj, z_j.partition))


def exchange_tensor(z_i: Tensor, z_j: Tensor, partition: tuple[int, ...], p: int) -> tuple[Tensor, Tensor]:
    """Graph-level segment exchange on (N, d) code batches."""
    a, b = segment_bounds(partition, p)
    d = sum(partition)

    def swap(host: Tensor, donor: Tensor) -> Tensor:
        parts = []
        if a > 0:
            parts.append(T.slice_cols(host, 0, a))
        parts.append(T.slice_cols(donor, a, b))
        if b < d:
            parts.append(T.slice_cols(host, b, d))
        return T.concat_cols(parts)

    return swap(z_i, z_j), swap(z_j, z_i)


@dataclass
class ModelState:
    config: ModelConfig
    params: dict[str, Tensor]
    iteration: int = 0

    def gen_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if not k.startswith("disc.")}

    def disc_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params.items() if k.startswith("disc.")}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


def _param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Deterministic name -> shape map for every tensor of the model."""
    w1, w2, w3, w4 = config.widths
    cb, hb, wb = config.bottleneck
    flat = cb * hb * wb
    fh = config.fc_hidden
    d = config.d
    shapes: dict[str, tuple[int, ...]] = {}

    def conv(name, ci, co, k):
        shapes[f"{name}.w"] = (co, ci, k, k)
        shapes[f"{name}.b"] = (co,)

    def inorm(name, c):
        shapes[f"{name}.g"] = (c,)
        shapes[f"{name}.b"] = (c,)

    def fc(name, ci, co):
        shapes[f"{name}.w"] = (ci, co)
        shapes[f"{name}.b"] = (co,)

    chain = [1, w1, w2, w3, w4]
    for i in range(4):
        conv(f"enc.conv{i + 1}", chain[i], chain[i + 1], 4)
        inorm(f"enc.in{i + 1}", chain[i + 1])
    conv("enc.res.conv1", w4, w4, 3)
    inorm("enc.res.in1", w4)
    conv("enc.res.conv2", w4, w4, 3)
    inorm("enc.res.in2", w4)
    fc("enc.fc1", flat, fh)
    fc("enc.fc2", fh, fh)
    fc("enc.fc3", fh, d)

    fc("dec.fc1", d, fh)
    fc("dec.fc2", fh, fh)
    fc("dec.fc3", fh, flat)
    conv("dec.res.conv1", w4, w4, 3)
    inorm("dec.res.in1", w4)
    conv("dec.res.conv2", w4, w4, 3)
    inorm("dec.res.in2", w4)
    up_chain = [w4, w3, w2, w1, 1]
    for i in range(4):
        conv(f"dec.up{i + 1}.conv", up_chain[i], up_chain[i + 1], 3)
        if i < 3:
            inorm(f"dec.up{i + 1}.in", up_chain[i + 1])

    for i in range(4):
        conv(f"disc.conv{i + 1}", chain[i], chain[i + 1], 4)
    fc("disc.fc", flat, 1)
    return shapes


def init_model(config: ModelConfig) -> ModelState:
    """Fan-in-scaled zero-mean normal weights, zero biases, unit norm gains."""
    rng = np.random.default_rng(config.seed)
    dt = config.np_dtype
    params: dict[str, Tensor] = {}
    for name, shape in _param_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            data = np.ones(shape, dtype=dt)
        elif leaf == "b":
            data = np.zeros(shape, dtype=dt)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else int(shape[0])
            data = (rng.standard_normal(shape) / math.sqrt(fan_in)).astype(dt)
        params[name] = Tensor(data, requires_grad=True)
    return ModelState(config=config, params=params, iteration=0)


# -- forward passes ----------------------------------------------------------


def _residual(params, prefix: str, h: Tensor) -> Tensor:
    t = T.conv2d(h, params[f"{prefix}.conv1.w"], params[f"{prefix}.conv1.b"], 1, 1)
    t = T.instance_norm(t, params[f"{prefix}.in1.g"], params[f"{prefix}.in1.b"], IN_EPS)
    t = T.relu(t)
    t = T.conv2d(t, params[f"{prefix}.conv2.w"], params[f"{prefix}.conv2.b"], 1, 1)
    t = T.instance_norm(t, params[f"{prefix}.in2.g"], params[f"{prefix}.in2.b"], IN_EPS)
    return h + t


def encode_tensor(state: ModelState, x: Tensor) -> Tensor:
    """(N, 1, H, W) -> (N, d)."""
    cfg = state.config
    P = state.params
    h = T.pad_hw(x, *cfg.pads)
    for i in range(1, 5):
        h = T.conv2d(h, P[f"enc.conv{i}.w"], P[f"enc.conv{i}.b"], 2, 1)
        h = T.instance_norm(h, P[f"enc.in{i}.g"], P[f"enc.in{i}.b"], IN_EPS)
        h = T.relu(h)
    h = _residual(P, "enc.res", h)
    cb, hb, wb = cfg.bottleneck
    h = T.reshape(h, (h.shape[0], cb * hb * wb))
    h = T.relu(T.matmul(h, P["enc.fc1.w"]) + P["enc.fc1.b"])
    h = T.relu(T.matmul(h, P["enc.fc2.w"]) + P["enc.fc2.b"])
    return T.matmul(h, P["enc.fc3.w"]) + P["enc.fc3.b"]


def decode_tensor(state: ModelState, z: Tensor) -> Tensor:
    """(N, d) -> (N, 1, H, W), values in (0, 1)."""
    cfg = state.config
    P = state.params
    cb, hb, wb = cfg.bottleneck
    h = T.relu(T.matmul(z, P["dec.fc1.w"]) + P["dec.fc1.b"])
    h = T.relu(T.matmul(h, P["dec.fc2.w"]) + P["dec.fc2.b"])
    h = T.matmul(h, P["dec.fc3.w"]) + P["dec.fc3.b"]
    h = T.reshape(h, (h.shape[0], cb, hb, wb))
    h = _residual(P, "dec.res", h)
    for i in range(1, 4):
        h = T.conv2d(T.upsample2(h), P[f"dec.up{i}.conv.w"], P[f"dec.up{i}.conv.b"], 1, 1)
        h = T.instance_norm(h, P[f"dec.up{i}.in.g"], P[f"dec.up{i}.in.b"], IN_EPS)
        h = T.relu(h)
    h = T.conv2d(T.upsample2(h), P["dec.up4.conv.w"], P["dec.up4.conv.b"], 1, 1)
    h = T.sigmoid(h)
    top, _, left, _ = cfg.pads
    return T.crop_hw(h, top, left, cfg.H, cfg.W)


def disc_logit_tensor(state: ModelState, x: Tensor, frozen: bool = False) -> Tensor:
    """(N, 1, H, W) -> (N, 1) raw logit; frozen detaches the parameters."""
    cfg = state.config
    P = state.params
    get = (lambda n: P[n].detach()) if frozen else (lambda n: P[n])
    h = T.pad_hw(x, *cfg.pads)
    for i in range(1, 5):
        h = T.relu(T.conv2d(h, get(f"disc.conv{i}.w"), get(f"disc.conv{i}.b"), 2, 1))
    cb, hb, wb = cfg.bottleneck
    h = T.reshape(h, (h.shape[0], cb * hb * wb))
    return T.matmul(h, get("disc.fc.w")) + get("disc.fc.b")


# -- public single-sample ops -------------------------------------------------


def _check_signal(state: ModelState, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (state.config.H, state.config.W):
        raise ShapeError(
            f"signal shape {x.shape} does not match model dims ({state.config.H}, {state.config.W})"
        )
    return x.astype(state.config.np_dtype)


def encode(state: ModelState, x: np.ndarray) -> LatentCode:
    """Deterministic single-signal forward pass onto the partitioned code."""
    x = _check_signal(state, x)
    with T.no_grad():
        z = encode_tensor(state, Tensor(x[None, None]))
    return LatentCode(z.data[0].copy(), state.config.partition)


def decode(state: ModelState, z) -> np.ndarray:
    """Code -> H x W signal with every value in (0, 1)."""
    values = z.values if isinstance(z, LatentCode) else np.asarray(z)
    if values.ndim != 1 or values.size != state.config.d:
        raise ShapeError(f"code length {values.size} != d={state.config.d}")
    with T.no_grad():
        x = decode_tensor(state, Tensor(values.astype(state.config.np_dtype)[None]))
    return x.data[0, 0].copy()


def discriminate(state: ModelState, x: np.ndarray) -> float:
    """Probability-like realness score in (0, 1)."""
    x = _check_signal(state, x)
    with T.no_grad():
        logit = disc_logit_tensor(state, Tensor(x[None, None]))
        score = T.sigmoid(logit)
    return float(score.data[0, 0])


def reconstruct(state: ModelState, x: np.ndarray) -> np.ndarray:
    x = _check_signal(state, x)
    with T.no_grad():
        out = decode_tensor(state, encode_tensor(state, Tensor(x[None, None])))
    return out.data[0, 0].copy()


# -- checkpoint IO -------------------------------------------------------------


def _config_to_json(cfg: ModelConfig) -> dict:
    return {
        "H": cfg.H, "W": cfg.W, "d": cfg.d,
        "partition": list(cfg.partition), "widths": list(cfg.widths),
        "fc_hidden": cfg.fc_hidden, "seed": cfg.seed, "dtype": cfg.dtype,
    }


def _config_from_json(obj: dict) -> ModelConfig:
    return ModelConfig(
        H=int(obj["H"]), W=int(obj["W"]), d=int(obj["d"]),
        partition=tuple(obj["partition"]), widths=tuple(obj["widths"]),
        fc_hidden=int(obj["fc_hidden"]), seed=int(obj["seed"]), dtype=str(obj["dtype"]),
    )


def save_model(state: ModelState, path) -> None:
    """Checkpoint directory: model.json + one raw little-endian float32 file per tensor."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = {}
    for name in sorted(state.params):
        t = state.params[name]
        fname = name + ".f32"
        (path / fname).write_bytes(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
        index[name] = {"shape": list(t.data.shape), "file": fname}
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": _config_to_json(state.config),
        "iteration": state.iteration,
        "tensors": index,
    }
    (path / CHECKPOINT_NAME).write_text(json.dumps(meta, indent=1, sort_keys=True))


def load_model(path) -> ModelState:
    path = Path(path)
    mpath = path / CHECKPOINT_NAME
    if not mpath.is_file():
        raise CheckpointError(f"no {CHECKPOINT_NAME} under {path}")
    try:
        meta = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"{mpath}: invalid JSON: {e}") from e
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{mpath}: unsupported version {meta.get('version')!r}")
    try:
        cfg = _config_from_json(meta["config"])
        iteration = int(meta["iteration"])
        index = meta["tensors"]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{mpath}: malformed metadata: {e}") from e

    expected = _param_shapes(cfg)
    missing = sorted(set(expected) - set(index))
    if missing:
        raise CheckpointError(f"checkpoint missing tensor {missing[0]!r}")
    params: dict[str, Tensor] = {}
    for name, shape in expected.items():
        entry = index[name]
        if tuple(entry["shape"]) != shape:
            raise CheckpointError(
                f"tensor {name!r}: shape {tuple(entry['shape'])} incompatible with config ({shape})"
            )
        fpath = path / entry["file"]
        if not fpath.is_file():
            raise CheckpointError(f"tensor {name!r}: missing file {entry['file']!r}")
        raw = fpath.read_bytes()
        want = int(np.prod(shape)) * 4
        if len(raw) != want:
            raise CheckpointError(
                f"tensor {name!r}: file holds {len(raw)} bytes, expected {want}"
            )
        data = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(cfg.np_dtype)
        params[name] = Tensor(data.copy(), requires_grad=True)
    return ModelState(config=cfg, params=params, iteration=iteration)
