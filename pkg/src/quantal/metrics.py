"""Exact references and comparison measures.

brute_force materializes the full log-factor table with numpy broadcasting,
so it is capped at 25 active variables (256 MB of float64) and refuses
larger nets rather than thrash.  Everything downstream compares against it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateReference, TooLarge
from .model import MarkovNet

__all__ = [
    "BruteForceResult",
    "brute_force",
    "log_relative_diff",
    "avg_kl",
    "EvalReport",
    "write_anytime_csv",
]

_LN10 = math.log(10.0)

MAX_BRUTE_FORCE_VARS = 25


@dataclass
class BruteForceResult:
    log_z: float                                  # natural log, -inf if Z == 0
    marginals: dict[int, tuple[float, float]]


def brute_force(net: MarkovNet) -> BruteForceResult:
    """Exact ln Z and single-variable marginals by explicit enumeration."""
    act = net.active_vars
    n = len(act)
    if n > MAX_BRUTE_FORCE_VARS:
        raise TooLarge(f"{n} active variables exceed the "
                       f"{MAX_BRUTE_FORCE_VARS}-variable enumeration cap")
    axis = {v: i for i, v in enumerate(act)}
    acc = np.zeros((2,) * n)
    for p in net.potentials:
        for v in p.scope:
            if v not in axis:
                raise ValueError(
                    f"potential mentions evidenced variable {v}; restrict first")
        with np.errstate(divide="ignore"):
            lt = np.log(p.table)
        k = len(p.scope)
        if k == 0:
            acc = acc + float(lt.reshape(()))
            continue
        pos = [axis[v] for v in p.scope]
        arr = lt.reshape((2,) * k).transpose(np.argsort(pos))
        shape = [1] * n
        for q in pos:
            shape[q] = 2
        acc = acc + arr.reshape(shape)

    if n == 0:
        lz = float(acc.reshape(()))
        return BruteForceResult(lz, {})

    lz = float(logsumexp(acc))
    marg: dict[int, tuple[float, float]] = {}
    for v in act:
        i = axis[v]
        l0 = float(logsumexp(np.take(acc, 0, axis=i)))
        l1 = float(logsumexp(np.take(acc, 1, axis=i)))
        if lz == -math.inf:
            marg[v] = (0.5, 0.5)   # Z == 0: flat by convention
        else:
            marg[v] = (math.exp(l0 - lz), math.exp(l1 - lz))
    return BruteForceResult(lz, marg)


def log_relative_diff(estimate_log: float, reference_log: float) -> float:
    """(log U - log U*) / log U*; any fixed log base gives the same number."""
    if abs(reference_log) <= 1e-12:
        raise DegenerateReference(
            "reference log partition function is ~0; relative gap undefined")
    return (estimate_log - reference_log) / reference_log


def avg_kl(exact: Mapping[int, tuple[float, float]],
           approx: Mapping[int, tuple[float, float]]) -> float:
    """Mean over variables of KL(exact_i || approx_i); inf when the
    approximation puts zero mass where the exact marginal has some."""
    if set(exact) != set(approx):
        raise ValueError("marginal tables cover different variables")
    if not exact:
        return 0.0
    total = 0.0
    for v in exact:
        for p, q in zip(exact[v], approx[v]):
            if p == 0.0:
                continue
            if q == 0.0:
                return math.inf
            total += p * math.log(p / q)
    return total / len(exact)


@dataclass
class EvalReport:
    """Comparison summary emitted by the CLI's compare command."""

    kind: str                              # "partition" or "marginals"
    log10_z_estimate: float | None = None
    log10_z_reference: float | None = None
    delta: float | None = None             # relative log-partition gap
    avg_kl: float | None = None
    variables: int | None = None

    def to_json(self) -> str:
        d = {k: v for k, v in self.__dict__.items() if v is not None or k == "kind"}
        for k, v in list(d.items()):
            if isinstance(v, float) and math.isinf(v):
                d[k] = "inf" if v > 0 else "-inf"
        return json.dumps(d)


def write_anytime_csv(records: Iterable, out: IO[str],
                      reference_log10: float | None = None) -> int:
    """Tabulate anytime records as k,log10_Z,delta,elapsed_ms; delta is left
    blank without a usable reference. Returns the number of rows."""
    w = csv.writer(out)
    w.writerow(["k", "log10_Z", "delta", "elapsed_ms"])
    rows = 0
    for r in records:
        k = r["k"] if isinstance(r, dict) else r.k
        lz = r["log10_Z"] if isinstance(r, dict) else r.log10_z
        ms = r["elapsed_ms"] if isinstance(r, dict) else r.elapsed_ms
        if k == math.inf:
            k = "inf"
        delta = ""
        if (lz is not None and reference_log10 is not None
                and abs(reference_log10) > 1e-12):
            delta = repr((lz - reference_log10) / reference_log10)
        w.writerow([k, "" if lz is None else repr(lz), delta,
                    round(ms, 3)])
        rows += 1
    return rows
