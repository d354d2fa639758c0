"""Spectral hypotheses for biorthogonal-family bounds, the counting function,
the phase-field approximate-controllability condition and the minimal time.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from mpmath import mp

from .errors import SequenceTooShort, ZeroPerturbation

WEAK_GAP_FLOOR = 1e-14
P_GRID = (0.1, 10.0, 1e-3)
H2_RTOL = 1e-8


@dataclass
class Verdict:
    item: int
    name: str
    passed: bool
    constants: dict = field(default_factory=dict)
    detail: str = ""


@dataclass
class HypothesisReport:
    """Per-item verdicts and tightest empirical constants over ``k <= n_checked``."""

    q: int
    n_checked: int
    verdicts: list
    beta: float
    rho: float
    c0: float
    p: float
    alpha: float

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict(self, name: str) -> Verdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def table(self) -> str:
        lines = [f"hypotheses over k = 1..{self.n_checked}, q = {self.q}"]
        for v in self.verdicts:
            consts = ", ".join(f"{k}={_fmt(x)}" for k, x in v.constants.items())
            lines.append(f"({v.item}) {v.name:<20} {'PASS' if v.passed else 'FAIL'}  {consts}")
        return "\n".join(lines)


def _fmt(x):
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(x)


class CountResult(int):
    """Counting-function value; ``truncated`` is set when r reaches |lambda_{n_max}|."""

    truncated: bool

    def __new__(cls, value, truncated=False):
        obj = super().__new__(cls, value)
        obj.truncated = truncated
        return obj


def counting_function(seq, r) -> CountResult:
    """``#{k : |lambda_k| <= r}`` over the stored terms."""
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    with mp.workprec(seq.prec):
        rr = mp.mpf(r)
        mods = [abs(v) for v in seq.values]
        count = sum(1 for m in mods if m <= rr)
        truncated = rr >= max(mods)
    return CountResult(count, truncated)


def _counting_jumps(seq):
    """Jump points of N(r) with the right value and the left limit at each."""
    mods = np.sort(seq.moduli())
    r, first, last = np.unique(mods, return_index=True, return_counts=True)
    right = first + last  # N(r) at the jump
    left = first  # N(r-) just before it
    return r, right.astype(float), left.astype(float)


def fit_counting(seq, grid=P_GRID):
    """Best ``p`` on a grid and the achieved ``alpha = sup_r |p sqrt(r) - N(r)|``.

    Between jumps N is constant and p*sqrt(r) monotone, so evaluating both
    one-sided values at every jump gives the exact sup over (0, |lambda_n|].
    """
    lo, hi, step = grid
    ps = lo + step * np.arange(int(round((hi - lo) / step)) + 1)
    r, right, left = _counting_jumps(seq)
    sr = np.sqrt(r)
    err = np.maximum(np.abs(ps[:, None] * sr - right), np.abs(ps[:, None] * sr - left)).max(axis=1)
    i = int(np.argmin(err))
    return float(ps[i]), float(err[i]), i in (0, len(ps) - 1)


def _pair_gaps(seq):
    """Dense matrix of |lambda_k - lambda_n| as mpf (extended precision)."""
    vals = seq.values
    n = len(vals)
    gaps = [[None] * n for _ in range(n)]
    with mp.workprec(seq.prec):
        for k in range(n):
            for j in range(k + 1, n):
                d = abs(vals[k] - vals[j])
                gaps[k][j] = gaps[j][k] = d
    return gaps


def check_hypotheses(seq, q: int) -> HypothesisReport:
    """Verify the seven spectral hypotheses over all pairs ``k, n <= n_max``."""
    if not isinstance(q, int) or q < 1:
        raise ValueError(f"q must be a positive integer, got {q!r}")
    n = seq.n_max
    if n < 2 * q + 2:
        raise SequenceTooShort(f"need at least {2 * q + 2} terms for q={q}, got {n}")
    vals = seq.values
    gaps = _pair_gaps(seq)
    verdicts = []

    with mp.workprec(seq.prec):
        min_gap = min(gaps[k][j] for k in range(n) for j in range(k + 1, n))
        verdicts.append(Verdict(1, "distinct", bool(min_gap > 0), {"min_gap": float(min_gap)}))

        min_re = min(v.real for v in vals)
        verdicts.append(Verdict(2, "positive_real_part", bool(min_re > 0), {"min_re": float(min_re)}))

        beta = max(abs(v.imag) / mp.sqrt(v.real) for v in vals)
        verdicts.append(Verdict(3, "imag_bound", bool(min_re > 0), {"beta": float(beta)}))

        mods = [abs(v) for v in vals]
        bad = [k + 1 for k in range(n - 1) if mods[k] > mods[k + 1]]
        verdicts.append(Verdict(4, "modulus_monotone", not bad, {"violations": len(bad)},
                                f"first violation at k={bad[0]}" if bad else ""))

        rho = min(gaps[k][j] / abs((k + 1) ** 2 - (j + 1) ** 2)
                  for k in range(n) for j in range(k + q, n))
        rho_f = float(rho)
        verdicts.append(Verdict(5, "weak_gap", rho_f > WEAK_GAP_FLOOR, {"rho": rho_f}))

        # the window 0 < |k-n| < q is empty for q = 1; use the full gap there
        width = q if q > 1 else n
        window = [(gaps[k][j], j) for k in range(n) for j in range(k + 1, min(n, k + width))]
        c0, at = min(window, key=lambda t: t[0])
        edge = n - n // 4
        head = [g for g, j in window if j < edge]
        shrinking = at >= edge and head and c0 < min(head) / 2
        passed6 = bool(c0 > 0) and not shrinking
        verdicts.append(Verdict(6, "window_gap", passed6, {"c0": float(c0), "attained_at": at + 1},
                                "infimum still shrinking at the truncation edge" if shrinking else ""))

    p, alpha, on_edge = fit_counting(seq)
    verdicts.append(Verdict(7, "counting", not on_edge, {"p": p, "alpha": alpha},
                            "best p on the search boundary" if on_edge else ""))
    return HypothesisReport(q, n, verdicts, float(beta), rho_f, float(c0), p, alpha)


# ----------------------------------------------------------------------
# phase-field approximate controllability
# ----------------------------------------------------------------------

def h2_expression(xi, rho, tau, k: int, l: int):
    """``xi^2 tau^2 (l^2-k^2)^2 - 2 xi rho tau (l^2+k^2) - 2 rho - 1``."""
    d = l * l - k * k
    return xi * xi * tau * tau * d * d - 2 * xi * rho * tau * (l * l + k * k) - 2 * rho - 1


def check_H2(xi, rho, tau, k_max: int, exact: bool | None = None, rtol: float = H2_RTOL):
    """All pairs ``1 <= k < l <= k_max`` where the controllability expression vanishes.

    Exact mode evaluates with Fractions (default when every parameter is
    an int or Fraction). Floating mode flags ``|expr| <= rtol*(1 + xi^2 tau^2 (l^2-k^2)^2)``.
    """
    if k_max < 2:
        raise ValueError(f"k_max must be at least 2, got {k_max}")
    params = (xi, rho, tau)
    if exact is None:
        exact = all(isinstance(x, (int, Fraction)) for x in params)
    if exact:
        xi, rho, tau = (Fraction(x) for x in params)
    else:
        xi, rho, tau = (float(x) for x in params)
    out = []
    for k in range(1, k_max):
        for l in range(k + 1, k_max + 1):
            e = h2_expression(xi, rho, tau, k, l)
            if exact:
                if e == 0:
                    out.append((k, l))
            else:
                d = l * l - k * k
                if abs(e) <= rtol * (1 + xi * xi * tau * tau * d * d):
                    out.append((k, l))
    return out


# ----------------------------------------------------------------------
# minimal null-control time
# ----------------------------------------------------------------------

@dataclass
class MinimalTimeEstimate:
    value: float
    window: tuple
    samples: list
    tail_max: float
    fitted_limit: float

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.value)


def minimal_time(beta_seq, min_terms: int = 20) -> MinimalTimeEstimate:
    """Finite-sample ``limsup_k -log|beta_k| / k^2``.

    ``beta_seq[k-1]`` is the k-th perturbation (float, Fraction or mpf; mpf
    avoids underflow). The estimate is the larger of the maximum of the
    samples over the trailing half and the 1/k -> 0 intercept of a least-squares
    line through them.
    """
    betas = list(beta_seq)
    if len(betas) < min_terms:
        raise ValueError(f"need at least {min_terms} terms, got {len(betas)}")
    samples = []
    with mp.workprec(128):
        for k, b in enumerate(betas, start=1):
            b = mp.mpf(b.numerator) / b.denominator if isinstance(b, Fraction) else mp.mpf(b)
            if b == 0:
                raise ZeroPerturbation(f"beta_{k} = 0: the two sub-spectra intersect")
            samples.append(float(-mp.log(abs(b)) / (k * k)))
    n = len(samples)
    start = n // 2
    ks = np.arange(start + 1, n + 1, dtype=float)
    tail = np.array(samples[start:])
    tail_max = float(tail.max())
    slope, intercept = np.polyfit(1.0 / ks, tail, 1)
    value = max(tail_max, float(intercept), 0.0)
    return MinimalTimeEstimate(value, (start + 1, n), samples, tail_max, float(intercept))
