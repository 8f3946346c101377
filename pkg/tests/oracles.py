"""Reference computations kept independent of the package internals.

Nothing here imports the allocator, the engine's bookkeeping or the dataset
summarizer; the checks they support would be circular otherwise.
"""
from __future__ import annotations

import hashlib
import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


def progressive_filling(flows, capacities):
    """Exact per-flow max-min rates.

    ``flows`` is a list of (resource set, cap) using Fractions or ints, with
    ``math.inf`` allowed as a cap. Every flow rises at the same pace until it
    hits its cap or one of its resources fills; then it stops.
    """
    n = len(flows)
    rate = [Fraction(0)] * n
    frozen = [False] * n
    cap = [None if math.isinf(c) else Fraction(c) for _, c in flows]
    remaining = {r: Fraction(c) for r, c in capacities.items()}
    while not all(frozen):
        live = [i for i in range(n) if not frozen[i]]
        step = None
        for i in live:
            if cap[i] is not None:
                gap = cap[i] - rate[i]
                step = gap if step is None else min(step, gap)
        for r, left in remaining.items():
            users = sum(1 for i in live if r in flows[i][0])
            if users:
                share = left / users
                step = share if step is None else min(step, share)
        assert step is not None, "unbounded flow"
        for i in live:
            rate[i] += step
            for r in flows[i][0]:
                remaining[r] -= step
        for i in live:
            if cap[i] is not None and rate[i] >= cap[i]:
                frozen[i] = True
            elif any(remaining[r] <= 0 for r in flows[i][0]):
                frozen[i] = True
    return rate


def is_max_min(rates, flows, capacities, rel=1e-9):
    """Bottleneck certificate: every flow is at its cap or owns a saturated
    resource on which no other flow gets more than it does."""
    load = {r: 0.0 for r in capacities}
    for x, (res, _) in zip(rates, flows):
        for r in res:
            load[r] += x
    for i, (res, cap) in enumerate(flows):
        if rates[i] >= cap * (1 - rel):
            continue
        ok = False
        for r in res:
            saturated = load[r] >= capacities[r] * (1 - rel)
            top = max(rates[j] for j, (rr, _) in enumerate(flows) if r in rr)
            if saturated and rates[i] >= top * (1 - rel):
                ok = True
                break
        if not ok:
            return False
    return True


def lp_max_min_floor(flows, capacities):
    """Largest common floor t with x_i >= t feasible under caps and capacities (via LP)."""
    n = len(flows)
    resources = sorted(capacities)
    # variables: x_0..x_{n-1}, t ; maximize t
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_ub, b_ub = [], []
    scale = max(capacities.values())
    for r in resources:
        row = np.zeros(n + 1)
        for i, (res, _) in enumerate(flows):
            if r in res:
                row[i] = 1.0
        a_ub.append(row)
        b_ub.append(capacities[r] / scale)
    for i in range(n):
        row = np.zeros(n + 1)
        row[i] = -1.0
        row[-1] = 1.0
        a_ub.append(row)
        b_ub.append(0.0)
    bounds = [(0, None if math.isinf(cap) else cap / scale) for _, cap in flows] + [(0, None)]
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds, method="highs")
    assert res.success, res.message
    return res.x[-1] * scale


def pair_loss(src_speed, dst_speed, hops, port_buffer, rtt, base=0.0):
    """Path loss from tail drop at each hop and per-link random loss."""
    survive = 1.0 - base
    arrival = src_speed
    for capacity, buffer, loss in hops:
        if arrival > capacity and buffer < rtt * capacity / 8:
            survive *= 1 - (arrival - capacity) / arrival
        survive *= 1 - loss
        arrival = min(arrival, capacity)
    if arrival > dst_speed and port_buffer < rtt * dst_speed / 8:
        survive *= 1 - (arrival - dst_speed) / arrival
    return 1 - survive


def resum_manifest_file(path):
    """Total bytes and file count from the body lines of a manifest file, ignoring the header."""
    total = 0
    files = 0
    dirs = set()
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            p, size, _seed = line.rstrip("\n").split("\t")
            total += int(size)
            files += 1
            parts = p.split("/")
            for k in range(1, len(parts)):
                dirs.add("/".join(parts[:k]))
    return total, files, len(dirs)


def decade_of(size):
    """Hand rule: 0..9 in decade 0, otherwise floor(log10) by string length."""
    return 0 if size < 10 else len(str(size)) - 1


def digest_of_stream(seed, size):
    """SHA-256 of the Philox counter stream, rebuilt from numpy primitives."""
    h = hashlib.sha256()
    words = (size + 7) // 8
    if words:
        bitgen = np.random.Philox(key=seed)
        raw = bitgen.random_raw(words).astype("<u8").tobytes()
        h.update(raw[:size])
    return h.digest()
