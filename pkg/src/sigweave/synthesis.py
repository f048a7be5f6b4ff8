"""Downstream applications of a trained model: unseen-scenario synthesis,
same-scenario augmentation, and denoising.

Scenario bookkeeping is symbolic: the emitted label follows from the exchange
algebra on the donor scenarios and never depends on model quality. Donors are
drawn from the train split only, with replacement, seed-deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, Sample, Scenario
from .errors import InfeasibilityError
from .mci import plan_unseen_references
from .model import ModelState, encode, decode, exchange


@dataclass(frozen=True)
class SynthesisRequest:
    target: Scenario
    count: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(int(v) for v in self.target))
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")


def _train_pool(existing: Dataset) -> dict[Scenario, list[Sample]]:
    pool = existing.by_scenario("train")
    for members in pool.values():
        members.sort(key=lambda s: s.id)
    return pool


def synthesize_unseen(state: ModelState, existing: Dataset, request: SynthesisRequest) -> list[Sample]:
    """Generate samples for an unseen scenario from exchanged donor codes."""
    target = existing.schema.validate_scenario(request.target)
    if target not in existing.unseen_scenarios:
        raise ValueError(f"target {target} is not declared unseen in the dataset")
    plans = plan_unseen_references(existing.existing_scenarios, target, existing.schema)
    pool = _train_pool(existing)
    plans = [pl for pl in plans if pool.get(pl.partner) and pool.get(pl.source)]
    if not plans:
        missing = []
        for p, (name, _) in enumerate(existing.schema.attributes):
            if not any(y[p] == target[p] for y in existing.existing_scenarios):
                missing.append(f"attribute {name!r} category {target[p]}")
        detail = "; ".join(missing) if missing else "no diagonal donor pair in the train split"
        raise InfeasibilityError(f"cannot synthesize {target}: {detail}")

    out = []
    for i in range(request.count):
        rng = np.random.default_rng([request.seed, i])
        plan = plans[int(rng.integers(len(plans)))]
        partner = pool[plan.partner][int(rng.integers(len(pool[plan.partner])))]
        source = pool[plan.source][int(rng.integers(len(pool[plan.source])))]
        z_partner = encode(state, partner.signal)
        z_source = encode(state, source.signal)
        z_syn, _ = exchange(z_partner, z_source, plan.attribute)
        signal = decode(state, z_syn).astype(np.float32)
        sid = "syn-" + "-".join(str(v) for v in target) + f"_{i:04d}"
        out.append(Sample(signal=signal, scenario=target, split="train", id=sid, synthetic=True))
    return out


def augment_seen(state: ModelState, existing: Dataset, scenario, count: int, seed: int = 0) -> list[Sample]:
    """Extra samples for a seen scenario by pairwise segment mixing.

    Every segment exchange between two same-scenario codes preserves the full
    scenario while blending sample-level variation; both decoded slots are
    emitted.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    scenario = existing.schema.validate_scenario(scenario)
    pool = _train_pool(existing).get(scenario, [])
    if len(pool) < 2:
        raise InfeasibilityError(
            f"augmenting {scenario} needs >= 2 train-split donors, found {len(pool)}"
        )
    P = existing.schema.P
    out: list[Sample] = []
    pair_idx = 0
    while len(out) < count:
        rng = np.random.default_rng([seed, pair_idx])
        a, b = rng.choice(len(pool), size=2, replace=False)
        z_a = encode(state, pool[int(a)].signal)
        z_b = encode(state, pool[int(b)].signal)
        for p in range(P):
            za2, zb2 = exchange(z_a, z_b, p)
            for z_mix in (za2, zb2):
                if len(out) >= count:
                    break
                sid = "aug-" + "-".join(str(v) for v in scenario) + f"_{len(out):04d}"
                out.append(Sample(
                    signal=decode(state, z_mix).astype(np.float32),
                    scenario=scenario, split="train", id=sid, synthetic=True,
                ))
        pair_idx += 1
    return out


def denoise(state: ModelState, sample: Sample) -> Sample:
    """Push a sample through the bottleneck; keeps id, scenario and split."""
    signal = decode(state, encode(state, sample.signal)).astype(np.float32)
    return replace(sample, signal=signal, synthetic=True)
