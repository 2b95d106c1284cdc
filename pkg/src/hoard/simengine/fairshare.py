"""Weighted max-min fair allocation by progressive filling.

Each subject (a job) owns one or more flows; a flow loads every resource
on its path at ``weight`` times the subject's rate. All unfrozen subjects'
rates rise together until a resource saturates (freezing every subject
with a flow through it) or a subject reaches its demand. The result is
max-min fair: no subject can gain rate without taking from a subject at
an equal or lower rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import CapacityError

_EPS = 1e-12


@dataclass(frozen=True)
class Flow:
    subject: str
    weight: float
    resources: tuple[str, ...]


def max_min_rates(
    flows: list[Flow],
    capacities: dict[str, float],
    demands: dict[str, float],
) -> dict[str, float]:
    """Allocated rate per subject. Subjects without flows get their demand
    outright (no shared constraint on their path)."""
    for flow in flows:
        if flow.weight < 0:
            raise CapacityError(f"flow for {flow.subject!r}: negative weight")
        for r in flow.resources:
            if r not in capacities:
                raise CapacityError(f"flow references unknown resource {r!r}")

    rate = {s: 0.0 for s in demands}
    by_subject: dict[str, list[Flow]] = {s: [] for s in demands}
    for flow in flows:
        if flow.subject not in by_subject:
            raise CapacityError(f"flow for unknown subject {flow.subject!r}")
        by_subject[flow.subject].append(flow)

    active = set()
    for subject, demand in demands.items():
        if demand < 0:
            raise CapacityError(f"subject {subject!r}: negative demand")
        positive_weights = any(f.weight > 0 for f in by_subject[subject])
        if demand == 0 or not positive_weights:
            rate[subject] = demand
        else:
            active.add(subject)

    max_rounds = len(demands) + len(capacities) + 1
    rounds = 0
    while active:
        rounds += 1
        if rounds > max_rounds:
            raise CapacityError("fair-share computation did not converge")

        load = {r: 0.0 for r in capacities}
        slope = {r: 0.0 for r in capacities}
        for subject, subject_flows in by_subject.items():
            for flow in subject_flows:
                for r in flow.resources:
                    load[r] += flow.weight * rate[subject]
                    if subject in active:
                        slope[r] += flow.weight

        step = math.inf
        for r in capacities:
            if slope[r] > 0:
                step = min(step, max(0.0, capacities[r] - load[r]) / slope[r])
        for subject in active:
            step = min(step, demands[subject] - rate[subject])

        if not math.isfinite(step):
            raise CapacityError("unbounded fair-share step")
        for subject in active:
            rate[subject] += step

        saturated = set()
        for r in capacities:
            if slope[r] > 0 and load[r] + slope[r] * step >= capacities[r] * (1 - _EPS) - _EPS:
                saturated.add(r)
        frozen = set()
        for subject in active:
            if rate[subject] >= demands[subject] - _EPS:
                frozen.add(subject)
                continue
            for flow in by_subject[subject]:
                if flow.weight > 0 and any(r in saturated for r in flow.resources):
                    frozen.add(subject)
                    break
        if not frozen:
            raise CapacityError("fair-share computation made no progress")
        active -= frozen
    return rate
