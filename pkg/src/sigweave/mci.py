"""Structured signal selection: closed exchange quads and reference planning.

A quad is four scenarios forming a rectangle in attribute space: two attributes
vary over exactly two categories each, everything else is pinned. Exchanging
the varying categories between members can never leave the quad, which is what
makes its samples usable as references for judging synthetic outputs.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .data import AttributeSchema, Scenario
from .errors import SchedulingError, SchemaError


class PairType(enum.Enum):
    IDENTICAL = "identical"
    ADJACENT = "adjacent"
    DIAGONAL = "diagonal"
    OTHER = "other"


def shared_attributes(y_i, y_j) -> list[int]:
    """Indices p where both scenarios carry the same category, ascending."""
    if len(y_i) != len(y_j):
        raise SchemaError(f"scenario lengths differ: {len(y_i)} vs {len(y_j)}")
    return [p for p, (a, b) in enumerate(zip(y_i, y_j)) if a == b]


def classify_pair(y_i, y_j) -> PairType:
    """Identical / adjacent / diagonal by shared-attribute count P, P-1, P-2."""
    n = len(shared_attributes(y_i, y_j))
    P = len(y_i)
    if n == P:
        return PairType.IDENTICAL
    if n == P - 1:
        return PairType.ADJACENT
    if n == P - 2:
        return PairType.DIAGONAL
    return PairType.OTHER


@dataclass(frozen=True)
class MciQuad:
    """Four member scenarios in corner order (a,x), (a,y), (b,x), (b,y).

    ``varying`` is the attribute index pair (p, q) that takes two categories
    across the quad; the corner order satisfies the adjacency relations
    members[0]~members[1] and members[2]~members[3] on p, members[0]~members[2]
    and members[1]~members[3] on q.
    """

    members: tuple[Scenario, Scenario, Scenario, Scenario]
    varying: tuple[int, int]

    def diagonal_pairs(self) -> tuple[tuple[int, int], tuple[int, int]]:
        return ((0, 3), (1, 2))

    def adjacent_pairs(self) -> list[tuple[int, int, int]]:
        """(i, j, shared varying attribute) for the four rectangle edges."""
        p, q = self.varying
        return [(0, 1, p), (2, 3, p), (0, 2, q), (1, 3, q)]

    def scenario_index(self, y: Scenario) -> int:
        return self.members.index(tuple(y))


def _exchange_scenarios(y_i: Scenario, y_j: Scenario, p: int) -> tuple[Scenario, Scenario]:
    """Symbolic counterpart of the latent exchange: swap category p."""
    a = list(y_i)
    b = list(y_j)
    a[p], b[p] = y_j[p], y_i[p]
    return tuple(a), tuple(b)


def is_valid_quad(y1, y2, y3, y4, schema: AttributeSchema) -> bool:
    """True iff the ordered four scenarios form a closed exchange rectangle."""
    members = [tuple(int(v) for v in y) for y in (y1, y2, y3, y4)]
    for y in members:
        schema.validate_scenario(y)
    for p, q in itertools.permutations(range(schema.P), 2):
        rest_equal = all(
            len({y[r] for y in members}) == 1
            for r in range(schema.P)
            if r not in (p, q)
        )
        if not rest_equal:
            continue
        a1, a2, a3, a4 = (y[p] for y in members)
        b1, b2, b3, b4 = (y[q] for y in members)
        relations = a1 == a2 and b1 == b3 and a4 == a3 and b4 == b2
        two_each = len({a1, a3}) == 2 and len({b1, b2}) == 2
        if relations and two_each:
            return True
    return False


def enumerate_quads(scenarios, schema: AttributeSchema) -> list[MciQuad]:
    """All canonical quads whose four members lie inside the given scenario set.

    Canonical order: varying categories sorted ascending, so each unordered
    member set appears exactly once.
    """
    have = {schema.validate_scenario(y) for y in scenarios}
    if not have:
        raise ValueError("scenario set must be non-empty")
    sizes = schema.sizes
    quads = []
    for p, q in itertools.combinations(range(schema.P), 2):
        rest = [r for r in range(schema.P) if r not in (p, q)]
        rest_choices = itertools.product(*(range(sizes[r]) for r in rest)) if rest else [()]
        for fixed in rest_choices:
            base = [0] * schema.P
            for r, v in zip(rest, fixed):
                base[r] = v
            for a, b in itertools.combinations(range(sizes[p]), 2):
                for x, y in itertools.combinations(range(sizes[q]), 2):
                    corners = []
                    for vp, vq in ((a, x), (a, y), (b, x), (b, y)):
                        c = list(base)
                        c[p], c[q] = vp, vq
                        corners.append(tuple(c))
                    if all(c in have for c in corners):
                        quads.append(MciQuad(members=tuple(corners), varying=(p, q)))
    return quads


@dataclass(frozen=True)
class ReferencePlan:
    """Recipe for one unseen synthesis: swap segment ``attribute`` between codes
    of a ``partner`` sample (target's categories everywhere else) and a
    ``source`` sample (carries the target's category on that attribute)."""

    partner: Scenario
    source: Scenario
    attribute: int
    expected: Scenario

    def check(self) -> bool:
        got, _ = _exchange_scenarios(self.partner, self.source, self.attribute)
        return got == self.expected


def plan_unseen_references(existing, target, schema: AttributeSchema) -> list[ReferencePlan]:
    """Every diagonal (partner, source, p) pair whose exchange yields target.

    Empty result signals an infeasible target; callers decide whether that is
    an error.
    """
    have = {schema.validate_scenario(y) for y in existing}
    target = schema.validate_scenario(target)
    if target in have:
        raise ValueError(f"target {target} is already an existing scenario")
    plans = []
    for p in range(schema.P):
        partners = [
            y for y in have
            if y[p] != target[p] and all(y[r] == target[r] for r in range(schema.P) if r != p)
        ]
        sources = [y for y in have if y[p] == target[p]]
        for partner in sorted(partners):
            for source in sorted(sources):
                if classify_pair(partner, source) is not PairType.DIAGONAL:
                    continue
                plan = ReferencePlan(partner=partner, source=source, attribute=p, expected=target)
                if plan.check():
                    plans.append(plan)
    return plans


def quad_at(quads: list[MciQuad], seed: int, step: int) -> MciQuad:
    """Deterministic draw with replacement; restartable from (seed, step)."""
    if not quads:
        raise SchedulingError("no quads to schedule")
    idx = int(np.random.default_rng([seed, step]).integers(len(quads)))
    return quads[idx]


def batch_scheduler(quads: list[MciQuad], seed: int, start_step: int = 0) -> Iterator[MciQuad]:
    """Infinite uniform stream of quads, reproducible from (seed, step)."""
    if not quads:
        raise SchedulingError("no quads to schedule")
    step = start_step
    while True:
        yield quad_at(quads, seed, step)
        step += 1
