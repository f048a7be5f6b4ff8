"""Sample/scenario data model, toy-signal generator, splits and manifest IO.

A dataset lives on disk as a directory holding ``manifest.json`` plus one raw
signal file per sample (little-endian float32, row-major, H*W values, no
header). Pixels are kept in [0, 1] and stored as float32 in memory too, so
save/load round-trips are bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DataFormatError, InfeasibilityError, SchemaError, StratificationError

Scenario = tuple[int, ...]

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered attribute set: ``attributes[p] = (name, category count)``."""

    attributes: tuple[tuple[str, int], ...]

    def __post_init__(self):
        attrs = tuple((str(n), int(s)) for n, s in self.attributes)
        object.__setattr__(self, "attributes", attrs)
        if len(attrs) < 2:
            raise SchemaError(f"need at least 2 attributes, got {len(attrs)}")
        for name, size in attrs:
            if size < 2:
                raise SchemaError(f"attribute {name!r} needs >= 2 categories, got {size}")

    @property
    def P(self) -> int:
        return len(self.attributes)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s for _, s in self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.attributes)

    def validate_scenario(self, scenario) -> Scenario:
        y = tuple(int(v) for v in scenario)
        if len(y) != self.P:
            raise SchemaError(f"scenario {y} has length {len(y)}, schema has P={self.P}")
        for p, (v, size) in enumerate(zip(y, self.sizes)):
            if not 0 <= v < size:
                raise SchemaError(f"scenario {y}: category {v} out of range for attribute {p} (size {size})")
        return y

    def all_scenarios(self) -> list[Scenario]:
        grids = np.indices(self.sizes).reshape(self.P, -1).T
        return [tuple(int(v) for v in row) for row in grids]


@dataclass
class Sample:
    """One H x W signal in [0, 1] with its scenario, split tag and id."""

    signal: np.ndarray
    scenario: Scenario
    split: str
    id: str
    synthetic: bool = False

    def __post_init__(self):
        self.scenario = tuple(int(v) for v in self.scenario)
        if self.split not in ("train", "test"):
            raise DataFormatError(f"sample {self.id!r}: split must be train|test, got {self.split!r}")

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.scenario == other.scenario
            and self.split == other.split
            and self.synthetic == other.synthetic
            and self.signal.shape == other.signal.shape
            and np.array_equal(self.signal, other.signal)
        )


@dataclass
class Dataset:
    schema: AttributeSchema
    samples: list[Sample]
    existing_scenarios: set[Scenario]
    unseen_scenarios: set[Scenario]
    H: int
    W: int

    def __post_init__(self):
        if self.existing_scenarios & self.unseen_scenarios:
            raise SchemaError("existing and unseen scenario sets overlap")
        for s in self.samples:
            if s.scenario in self.unseen_scenarios:
                raise SchemaError(f"sample {s.id!r} carries unseen scenario {s.scenario}")
            if s.scenario not in self.existing_scenarios:
                raise SchemaError(f"sample {s.id!r} scenario {s.scenario} not in existing set")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.schema == other.schema
            and (self.H, self.W) == (other.H, other.W)
            and self.existing_scenarios == other.existing_scenarios
            and self.unseen_scenarios == other.unseen_scenarios
            and self.samples == other.samples
        )

    def by_scenario(self, split: str | None = None) -> dict[Scenario, list[Sample]]:
        out: dict[Scenario, list[Sample]] = {}
        for s in self.samples:
            if split is None or s.split == split:
                out.setdefault(s.scenario, []).append(s)
        return out


def _toy_pattern(schema: AttributeSchema, y: Scenario, H: int, W: int) -> np.ndarray:
    """Noise-free toy pattern for one scenario, float64, before clamping."""
    sizes = schema.sizes
    r = np.arange(H, dtype=np.float64)[:, None]
    u = np.arange(W, dtype=np.float64)[None, :]
    b1 = 0.5 + 0.5 * np.sin(2.0 * np.pi * (y[0] + 1) * r / H)
    center = (y[1] + 0.5) * W / sizes[1]
    b2 = np.exp(-((u - center) ** 2) / (2.0 * (W / 8.0) ** 2))
    x = 0.5 * b1 + 0.5 * b2
    for p in range(2, schema.P):
        x = x + 0.1 * np.cos(2.0 * np.pi * (y[p] + 1) * (r + u) / (H + W))
    return x


def toy_clean_pattern(schema: AttributeSchema, y, H: int, W: int) -> np.ndarray:
    """Ground-truth pattern (noise_amp = 0) as float32 in [0, 1]."""
    y = schema.validate_scenario(y)
    return np.clip(_toy_pattern(schema, y, H, W), 0.0, 1.0).astype(np.float32)


def generate_toy_dataset(
    schema: AttributeSchema,
    H: int,
    W: int,
    per_scenario: int,
    noise_amp: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """Parametric toy dataset: each attribute drives a distinct basis factor.

    Attribute 1 sets the dominant row frequency, attribute 2 the column bump
    position, further attributes add low-amplitude diagonal ripples. Identical
    inputs reproduce bit-identical datasets.
    """
    if not isinstance(schema, AttributeSchema):
        raise SchemaError("schema must be an AttributeSchema")
    if H < 8 or W < 8:
        raise ValueError(f"H and W must be >= 8, got {H}x{W}")
    if per_scenario < 1:
        raise ValueError(f"per_scenario must be >= 1, got {per_scenario}")
    if not math.isfinite(noise_amp):
        raise ValueError(f"noise_amp must be finite, got {noise_amp}")
    if not 0.0 <= noise_amp <= 0.2:
        raise ValueError(f"noise_amp must lie in [0, 0.2], got {noise_amp}")

    rng = np.random.default_rng(seed)
    samples = []
    scenarios = schema.all_scenarios()
    for y in scenarios:
        base = _toy_pattern(schema, y, H, W)
        for k in range(per_scenario):
            eps = rng.uniform(-noise_amp, noise_amp, size=(H, W))
            signal = np.clip(base + eps, 0.0, 1.0).astype(np.float32)
            sid = "y" + "-".join(str(v) for v in y) + f"_{k:03d}"
            samples.append(Sample(signal=signal, scenario=y, split="train", id=sid))
    return Dataset(
        schema=schema,
        samples=samples,
        existing_scenarios=set(scenarios),
        unseen_scenarios=set(),
        H=H,
        W=W,
    )


def split_dataset(ds: Dataset, train_fraction: float = 0.8, seed: int = 0) -> Dataset:
    """Stratified train/test split: per scenario, floor(fraction*n) train."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    strata = ds.by_scenario()
    for y, members in strata.items():
        if len(members) < 2:
            raise StratificationError(f"scenario {y} has {len(members)} sample(s); need >= 2 to split")
    new_samples = {}
    for y in sorted(strata):
        members = sorted(strata[y], key=lambda s: s.id)
        rng = np.random.default_rng([seed, *y])
        order = rng.permutation(len(members))
        n_train = int(math.floor(train_fraction * len(members)))
        for rank, idx in enumerate(order):
            s = members[idx]
            new_samples[s.id] = replace(s, split="train" if rank < n_train else "test")
    samples = [new_samples[s.id] for s in ds.samples]
    return Dataset(
        schema=ds.schema,
        samples=samples,
        existing_scenarios=set(ds.existing_scenarios),
        unseen_scenarios=set(ds.unseen_scenarios),
        H=ds.H,
        W=ds.W,
    )


def hold_out_unseen(ds: Dataset, targets) -> tuple[Dataset, list[Sample]]:
    """Remove target scenarios from the dataset and return them as ground truth.

    The returned ground-truth samples keep their split tags and are never to be
    handed to training; the existing dataset records the targets as unseen.
    Raises InfeasibilityError when a target could never be synthesized from the
    remaining scenarios (no reference plan exists).
    """
    targets = {ds.schema.validate_scenario(t) for t in targets}
    if not targets:
        raise ValueError("targets must be non-empty")
    kept = [s for s in ds.samples if s.scenario not in targets]
    removed = [s for s in ds.samples if s.scenario in targets]
    existing = ds.existing_scenarios - targets
    out = Dataset(
        schema=ds.schema,
        samples=kept,
        existing_scenarios=existing,
        unseen_scenarios=set(ds.unseen_scenarios) | targets,
        H=ds.H,
        W=ds.W,
    )
    from .mci import plan_unseen_references  # local import, avoids a cycle

    for t in sorted(targets):
        if not plan_unseen_references(existing, t, ds.schema):
            raise InfeasibilityError(
                f"holding out {t} leaves no reference pair able to reconstruct it"
            )
    return out, removed


def save_dataset(ds: Dataset, path) -> None:
    """Write manifest.json plus one raw float32 file per sample."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    records = []
    for s in ds.samples:
        fname = s.id + ".f32"
        if s.signal.shape != (ds.H, ds.W):
            raise DataFormatError(f"sample {s.id!r}: signal shape {s.signal.shape} != ({ds.H}, {ds.W})")
        (path / fname).write_bytes(np.ascontiguousarray(s.signal, dtype="<f4").tobytes())
        rec = {"id": s.id, "file": fname, "scenario": list(s.scenario), "split": s.split}
        if s.synthetic:
            rec["synthetic"] = True
        records.append(rec)
    manifest = {
        "version": MANIFEST_VERSION,
        "H": ds.H,
        "W": ds.W,
        "schema": {"attributes": [{"name": n, "size": s} for n, s in ds.schema.attributes]},
        "unseen": sorted(list(y) for y in ds.unseen_scenarios),
        "samples": records,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(path) -> Dataset:
    """Load a dataset directory written by save_dataset; validates everything."""
    path = Path(path)
    mpath = path / MANIFEST_NAME
    if not mpath.is_file():
        raise DataFormatError(f"no {MANIFEST_NAME} under {path}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{mpath}: invalid JSON: {e}") from e
    if manifest.get("version") != MANIFEST_VERSION:
        raise DataFormatError(f"{mpath}: unsupported version {manifest.get('version')!r}")
    try:
        H, W = int(manifest["H"]), int(manifest["W"])
        schema = AttributeSchema(
            tuple((a["name"], a["size"]) for a in manifest["schema"]["attributes"])
        )
        unseen = {schema.validate_scenario(y) for y in manifest["unseen"]}
        records = manifest["samples"]
    except (KeyError, TypeError) as e:
        raise DataFormatError(f"{mpath}: missing or malformed field: {e}") from e
    except SchemaError as e:
        raise DataFormatError(f"{mpath}: bad unseen scenario: {e}") from e

    expected_bytes = H * W * 4
    samples = []
    for rec in records:
        rid = rec.get("id", "<missing id>")
        fpath = path / rec["file"]
        if not fpath.is_file():
            raise DataFormatError(f"record {rid!r}: missing signal file {rec['file']!r}")
        raw = fpath.read_bytes()
        if len(raw) != expected_bytes:
            raise DataFormatError(
                f"record {rid!r}: {rec['file']!r} holds {len(raw)} bytes, expected {expected_bytes}"
            )
        signal = np.frombuffer(raw, dtype="<f4").reshape(H, W)
        if not np.all(np.isfinite(signal)) or signal.min() < 0.0 or signal.max() > 1.0:
            raise DataFormatError(f"record {rid!r}: pixel values outside [0, 1]")
        y = schema.validate_scenario(rec["scenario"])
        samples.append(
            Sample(
                signal=signal.copy(),
                scenario=y,
                split=rec["split"],
                id=rec["id"],
                synthetic=bool(rec.get("synthetic", False)),
            )
        )
    existing = {s.scenario for s in samples}
    if existing & unseen:
        raise DataFormatError(f"{mpath}: samples carry scenarios listed as unseen")
    return Dataset(
        schema=schema, samples=samples, existing_scenarios=existing,
        unseen_scenarios=unseen, H=H, W=W,
    )
