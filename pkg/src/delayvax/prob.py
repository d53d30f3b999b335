"""Probability that a node at depth ``d`` outlasts the immunization delay.

Infection reaches a depth-``d`` node after ``Z = X_1 + ... + X_d`` with
``X_j ~ Exp(lam)`` i.i.d., i.e. ``Z ~ Erlang(d, lam)``. A vaccinated node
becomes immune iff ``Z > tau``.

* ``tau ~ Exp(mu)``:  ``P{Z > tau} = 1 - (lam / (lam + mu)) ** d``
* ``tau = t`` fixed:  ``P{Z > t} = sum_{m < d} exp(-lam t) (lam t)^m / m!``

Depth 0 is a source, which is infected at time zero; its probability is 0
under every model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# above this lam*t the Poisson weights are built in log space
_LOG_DOMAIN_CUTOFF = 700.0


@dataclass(frozen=True)
class DelayModel:
    """Infection rate ``lam`` paired with an immunization-delay law.

    Use :meth:`exponential`, :meth:`with_mean` or :meth:`deterministic`
    rather than the raw constructor.
    """

    lam: float
    kind: str = "exponential"
    mu: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"infection rate must be positive, got {self.lam}")
        if self.kind == "exponential":
            if not self.mu > 0:
                raise ValueError(f"mu must be positive, got {self.mu}")
        elif self.kind == "deterministic":
            if not self.t >= 0:
                raise ValueError(f"deterministic delay must be >= 0, got {self.t}")
        else:
            raise ValueError(f"unknown delay kind {self.kind!r}")

    @classmethod
    def exponential(cls, lam: float, mu: float) -> "DelayModel":
        return cls(float(lam), "exponential", mu=float(mu))

    @classmethod
    def with_mean(cls, lam: float, expected_tau: float) -> "DelayModel":
        """Exponential delay with ``E[tau] = expected_tau``."""
        return cls.exponential(lam, 1.0 / expected_tau)

    @classmethod
    def deterministic(cls, lam: float, t: float) -> "DelayModel":
        return cls(float(lam), "deterministic", t=float(t))

    @property
    def expected_tau(self) -> float:
        return 1.0 / self.mu if self.kind == "exponential" else self.t

    def describe(self) -> str:
        if self.kind == "exponential":
            return f"lam={self.lam:g}, tau~Exp(mu={self.mu:g})"
        return f"lam={self.lam:g}, tau={self.t:g}"


def survival_prob(m: DelayModel, depth):
    """``P{Z_d > tau}`` for a scalar or array of depths."""
    d = np.asarray(depth)
    if np.any(d < 0):
        raise ValueError("depth must be non-negative")
    if m.kind == "exponential":
        out = -np.expm1(d * math.log(m.lam / (m.lam + m.mu)))
    else:
        lower, _ = _erlang_tables(m.lam * m.t, int(d.max()) if d.size else 0)
        out = lower[d]
    return float(out) if out.ndim == 0 else out


def survival_gap(m: DelayModel, shallow, deep):
    """``P{Z_deep > tau} - P{Z_shallow > tau}`` without cancellation.

    ``shallow <= deep`` elementwise. This is the factor multiplying the
    exclusive descendant count in a marginal gain, where ``shallow`` is the
    depth of the deepest vaccinated ancestor (0 when there is none).
    """
    lo = np.asarray(shallow)
    hi = np.asarray(deep)
    if np.any(lo > hi) or np.any(lo < 0):
        raise ValueError("need 0 <= shallow <= deep")
    if m.kind == "exponential":
        logq = math.log(m.lam / (m.lam + m.mu))
        out = np.exp(lo * logq) * -np.expm1((hi - lo) * logq)
        # P(0) = 0, and q**0 = 1 already gives that
    else:
        top = int(hi.max()) if hi.size else 0
        lower, upper = _erlang_tables(m.lam * m.t, top)
        out = np.where(lower[lo] < 0.5, lower[hi] - lower[lo], upper[lo] - upper[hi])
    return float(out) if out.ndim == 0 else out


def erlang_tail(d: int, x: float) -> float:
    """``P{Erlang(d, 1) > x}`` = ``P{Poisson(x) < d}`` for ``d >= 1``; 0 for ``d = 0``."""
    lower, _ = _erlang_tables(float(x), int(d))
    return float(lower[d])


def _poisson_weights(x: float, count: int) -> np.ndarray:
    if x == 0.0:
        w = np.zeros(count)
        w[0] = 1.0
        return w
    if x > _LOG_DOMAIN_CUTOFF:
        m = np.arange(count)
        from scipy.special import gammaln
        return np.exp(m * math.log(x) - x - gammaln(m + 1))
    w = np.empty(count)
    term = math.exp(-x)
    for i in range(count):
        w[i] = term
        term *= x / (i + 1)
    return w


def _neumaier_cumsum(values) -> np.ndarray:
    out = np.empty(len(values) + 1)
    out[0] = 0.0
    s = 0.0
    c = 0.0
    for i, v in enumerate(values):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i + 1] = s + c
    return out


@lru_cache(maxsize=256)
def _erlang_tables(x: float, max_depth: int) -> tuple[np.ndarray, np.ndarray]:
    """``lower[d] = P{Poisson(x) < d}`` and ``upper[d] = P{Poisson(x) >= d}``, d = 0..max_depth.

    Both tails are accumulated from their own small end, so each is accurate
    where it is small.
    """
    # weights past this index are below double precision relative to the mass
    horizon = int(x + 40.0 * math.sqrt(x) + 60)
    count = max(max_depth, horizon) + 1
    w = _poisson_weights(x, count)
    lower = _neumaier_cumsum(w)[: max_depth + 1]
    upper = _neumaier_cumsum(w[::-1])[::-1][: max_depth + 1]
    lower = np.minimum(lower, 1.0)
    upper = np.minimum(upper, 1.0)
    lower[0] = 0.0
    upper[0] = 1.0
    lower.setflags(write=False)
    upper.setflags(write=False)
    return lower, upper
