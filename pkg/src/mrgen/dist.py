"""Multinomial and binomial machinery for integer edge-weight modeling.

A multinomial over candidate edges factorizes exactly into a chain of
binomials (one per component) or, group by group, into binomial *how much
of the remaining total goes to this group* times multinomial *how it is
split inside the group*.  Both factorizations are identities, which the
test-suite checks against exhaustive enumeration.

All probability work happens in log space via the log-gamma function;
raw pmf products are never formed.
"""
from __future__ import annotations

import math
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "as_simplex",
    "as_counts",
    "as_split",
    "mn_logpmf",
    "bi_logpmf",
    "stick_chain_logpmf",
    "grouped_marginal_params",
    "conditional_group_logpmf",
    "group_chain_logpmf",
    "mn_sample",
    "group_chain_sample",
    "enumerate_support",
]

SIMPLEX_TOL = 1e-9
_DENOM_FLOOR = 1e-12


def as_simplex(theta: Sequence[float]) -> np.ndarray:
    """Validate a probability vector: non-negative, sums to 1 within 1e-9."""
    t = np.asarray(theta, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("simplex vector must be 1-D and non-empty")
    if np.any(t < 0):
        raise ValueError("simplex vector has negative entries")
    if abs(float(t.sum()) - 1.0) > SIMPLEX_TOL:
        raise ValueError(f"simplex vector sums to {t.sum()!r}, not 1")
    return t


def as_counts(x: Sequence[int]) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("count vector must be 1-D")
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(x == np.floor(x)):
            raise ValueError("count vector must be integer-valued")
        x = x.astype(np.int64)
    if np.any(x < 0):
        raise ValueError("count vector has negative entries")
    return x.astype(np.int64)


def as_split(sizes: Sequence[int], length: int) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in sizes)
    if any(s < 1 for s in sizes):
        raise ValueError("group sizes must be >= 1")
    if sum(sizes) != length:
        raise ValueError(f"group sizes sum to {sum(sizes)}, expected {length}")
    return sizes


def mn_logpmf(x: Sequence[int], w: int, theta: Sequence[float]) -> float:
    """log Mu(x | w, theta); components with theta=0 force x=0 (else -inf)."""
    x = as_counts(x)
    theta = as_simplex(theta)
    if x.size != theta.size:
        raise ValueError("count and parameter vectors differ in length")
    if int(x.sum()) != w:
        raise ValueError(f"counts sum to {int(x.sum())}, expected w={w}")
    if np.any((theta == 0.0) & (x > 0)):
        return float("-inf")
    coeff = gammaln(w + 1) - gammaln(x + 1).sum()
    pos = x > 0
    return float(coeff + np.sum(x[pos] * np.log(theta[pos])))


def bi_logpmf(k: int, n: int, p: float) -> float:
    """log Bi(k | n, p) with the 0*log(0) := 0 convention."""
    if not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"need 0 <= p <= 1, got p={p}")
    if p == 0.0:
        return 0.0 if k == 0 else float("-inf")
    if p == 1.0:
        return 0.0 if k == n else float("-inf")
    coeff = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return float(coeff + k * math.log(p) + (n - k) * math.log1p(-p))


def stick_chain_logpmf(x: Sequence[int], w: int, theta: Sequence[float]) -> float:
    """Multinomial log-pmf computed as a chain of per-component binomials.

    Equals :func:`mn_logpmf` exactly (to float precision): at step e the
    remaining total ``w - sum(x[:e])`` is split by a binomial with success
    probability ``theta_e / (1 - sum(theta[:e]))``; the final step is forced
    to probability 1, where the telescoping lands analytically.
    """
    x = as_counts(x)
    theta = as_simplex(theta)
    if x.size != theta.size:
        raise ValueError("count and parameter vectors differ in length")
    if int(x.sum()) != w:
        raise ValueError(f"counts sum to {int(x.sum())}, expected w={w}")
    total = 0.0
    remaining = int(w)
    used_prob = 0.0
    last = x.size - 1
    for e in range(x.size):
        if e == last:
            p = 1.0
        elif theta[e] == 0.0:
            p = 0.0
        else:
            p = float(theta[e]) / max(1.0 - used_prob, _DENOM_FLOOR)
            p = min(p, 1.0)
        term = bi_logpmf(int(x[e]), remaining, p)
        if term == float("-inf"):
            return float("-inf")
        total += term
        remaining -= int(x[e])
        used_prob += float(theta[e])
    return total


def grouped_marginal_params(theta: Sequence[float], split: Sequence[int]) -> np.ndarray:
    """Per-group probability masses: combining multinomial counts stays multinomial."""
    theta = as_simplex(theta)
    sizes = as_split(split, theta.size)
    starts = np.cumsum((0,) + sizes[:-1])
    return np.add.reduceat(theta, starts)


def conditional_group_logpmf(u_m: Sequence[int], v_m: int, theta_m: Sequence[float]) -> float:
    """log-pmf of one group's counts given the group total: Mu(u | v, theta/sum(theta))."""
    u = as_counts(u_m)
    if int(u.sum()) != v_m:
        raise ValueError(f"group counts sum to {int(u.sum())}, expected {v_m}")
    t = np.asarray(theta_m, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("group parameters must be non-negative")
    mass = float(t.sum())
    if mass <= 0.0:
        if v_m > 0:
            raise ValueError("zero-mass group cannot receive positive count")
        return 0.0
    lam = t / mass
    coeff = gammaln(v_m + 1) - gammaln(u + 1).sum()
    pos = u > 0
    if np.any((lam == 0.0) & (u > 0)):
        return float("-inf")
    return float(coeff + np.sum(u[pos] * np.log(lam[pos])))


def group_chain_logpmf(x: Sequence[int], w: int, theta: Sequence[float],
                       split: Sequence[int]) -> float:
    """Multinomial log-pmf as a chain of per-group binomial x multinomial factors.

    For each group: a binomial allocates a share ``v_m`` of the remaining
    total (success probability = group mass over remaining mass, final group
    forced to 1), then the share is distributed inside the group by a
    multinomial with the renormalized parameters.
    """
    x = as_counts(x)
    theta = as_simplex(theta)
    if x.size != theta.size:
        raise ValueError("count and parameter vectors differ in length")
    if int(x.sum()) != w:
        raise ValueError(f"counts sum to {int(x.sum())}, expected w={w}")
    sizes = as_split(split, theta.size)

    total = 0.0
    remaining = int(w)
    used_prob = 0.0
    offset = 0
    for m, size in enumerate(sizes):
        u = x[offset : offset + size]
        t = theta[offset : offset + size]
        v = int(u.sum())
        mass = float(t.sum())
        if m == len(sizes) - 1:
            eta = 1.0
        elif mass == 0.0:
            eta = 0.0
        else:
            eta = mass / max(1.0 - used_prob, _DENOM_FLOOR)
            eta = min(eta, 1.0)
        term = bi_logpmf(v, remaining, eta)
        if term == float("-inf"):
            return float("-inf")
        total += term
        if mass <= 0.0:
            if v > 0:
                return float("-inf")
        else:
            inner = conditional_group_logpmf(u, v, t)
            if inner == float("-inf"):
                return float("-inf")
            total += inner
        remaining -= v
        used_prob += mass
        offset += size
    return total


def mn_sample(rng: np.random.Generator, w: int, theta: Sequence[float]) -> np.ndarray:
    """Draw one multinomial count vector; always sums to exactly ``w``."""
    theta = as_simplex(theta)
    if w < 0:
        raise ValueError("total must be non-negative")
    if w == 0:
        return np.zeros(theta.size, dtype=np.int64)
    return rng.multinomial(int(w), theta / theta.sum()).astype(np.int64)


def group_chain_sample(rng: np.random.Generator, w: int, theta: Sequence[float],
                       split: Sequence[int]) -> np.ndarray:
    """Draw a count vector through the group chain: binomial share per group,
    multinomial allocation inside, the final group absorbing the remainder."""
    theta = as_simplex(theta)
    sizes = as_split(split, theta.size)
    out = np.zeros(theta.size, dtype=np.int64)
    remaining = int(w)
    used_prob = 0.0
    offset = 0
    for m, size in enumerate(sizes):
        t = theta[offset : offset + size]
        mass = float(t.sum())
        if m == len(sizes) - 1:
            v = remaining
        elif mass == 0.0 or remaining == 0:
            v = 0
        else:
            eta = min(mass / max(1.0 - used_prob, _DENOM_FLOOR), 1.0)
            v = int(rng.binomial(remaining, eta))
        if v > 0:
            if mass <= 0.0:
                raise ValueError("zero-mass group asked to absorb positive count")
            out[offset : offset + size] = rng.multinomial(v, t / mass)
        remaining -= v
        used_prob += mass
        offset += size
    return out


def _support_count(w: int, e: int) -> int:
    return math.comb(w + e - 1, e - 1)


def enumerate_support(w: int, length: int, budget: int = 200_000) -> list[np.ndarray]:
    """All non-negative integer vectors of the given length summing to ``w``.

    The count is C(w+E-1, E-1); anything above ``budget`` raises instead of
    thrashing memory.  Intended as a small-scale test oracle.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if w < 0:
        raise ValueError("total must be >= 0")
    if _support_count(w, length) > budget:
        raise ValueError(f"support size {_support_count(w, length)} exceeds budget {budget}")

    def rec(prefix: list[int], rest: int, slots: int) -> Iterator[list[int]]:
        if slots == 1:
            yield prefix + [rest]
            return
        for v in range(rest + 1):
            yield from rec(prefix + [v], rest - v, slots - 1)

    return [np.array(v, dtype=np.int64) for v in rec([], w, length)]
