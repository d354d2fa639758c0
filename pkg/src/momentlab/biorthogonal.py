"""Minimal-norm biorthogonal families to complex exponentials on (0, T).

The element ``q_k`` of minimal L^2(0, T) norm satisfying
``int_0^T q_k(t) exp(-lambda_j t) dt = delta_kj`` (j <= N) lies in the span
of ``exp(-conj(lambda_n) t)``. Writing ``q_k = sum_n A[k, n] exp(-conj(lambda_n) t)``
turns the constraints into ``G a_k = e_k`` with the Hermitian Gram matrix

    G[j, n] = (1 - exp(-(lambda_j + conj(lambda_n)) T)) / (lambda_j + conj(lambda_n)),

and ``a_k = A[k, :]``, ``||q_k||^2 = (G^{-1})_{kk}``. Everything is closed form;
the only numerical difficulty is the conditioning of G, which grows like the
square of the largest norm, so all of it runs in mpmath at escalating
precision.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
import mpmath
from mpmath import mp
from mpmath.libmp import from_man_exp
from scipy.optimize import brentq

from . import _mplinalg as la
from .errors import PrecisionTooLow, ResidualTooLarge

DEFAULT_PREC = 512
MAX_PREC = 8192
RESIDUAL_BOUND = 1e-20


def _lambdas(seq, N, real):
    vals = seq.values[:N]
    return [mp.mpf(v.real) for v in vals] if real else [mp.mpc(v) for v in vals]


def gram_entry(lj, ln, T):
    """``int_0^T exp(-lj t) conj(exp(-ln t)) dt`` in closed form."""
    z = lj + la.conj(ln)
    return -mp.expm1(-z * T) / z


@dataclass
class GramMatrix:
    entries: list
    T: float
    prec: int
    lambdas: list
    real: bool

    @property
    def N(self) -> int:
        return len(self.entries)

    def diagonal(self):
        return [self.entries[k][k] for k in range(self.N)]

    def to_mp_matrix(self):
        return mp.matrix(self.entries)


def _check_args(seq, T, N, prec):
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    if N is None:
        N = seq.n_max
    if not 1 <= N <= seq.n_max:
        raise ValueError(f"N must lie in 1..{seq.n_max}, got {N}")
    if prec < 64:
        raise ValueError(f"precision must be at least 64 bits, got {prec}")
    if any(not v.real > 0 for v in seq.values[:N]):
        raise ValueError("every lambda_k needs a positive real part")
    return N


def gram_matrix(seq, T, N=None, prec: int = DEFAULT_PREC, check: bool = True) -> GramMatrix:
    """Closed-form Gram matrix of ``exp(-lambda_k t)``, k <= N, on (0, T).

    With ``check`` the Cholesky factorization is attempted and PrecisionTooLow
    raised when it breaks down at ``prec`` bits.
    """
    N = _check_args(seq, T, N, prec)
    real = seq.is_real
    with mp.workprec(prec):
        lam = _lambdas(seq, N, real)
        Tm = mp.mpf(T)
        G = [[None] * N for _ in range(N)]
        for j in range(N):
            for n in range(j, N):
                g = gram_entry(lam[j], lam[n], Tm)
                G[j][n] = g
                G[n][j] = la.conj(g)
            G[j][j] = mp.re(G[j][j])
        if check and la.cholesky(G) is None:
            raise PrecisionTooLow(f"Gram matrix not numerically positive definite at {prec} bits "
                                  f"(N={N}, T={T})", prec)
    return GramMatrix(G, float(T), prec, lam, real)


@dataclass
class BiorthogonalFamily:
    """``q_k(t) = sum_n coeffs[k][n] * exp(-conj(lambda_n) t)`` for k = 1..N.

    ``coeffs`` and ``norms`` are mpmath numbers held at twice the factorization
    precision ``prec`` (the refinement step computes there). ``residuals[k]`` is
    ``max_j |int q_k e^{-lambda_j t} - delta_kj|`` from the refinement check.
    """

    coeffs: list
    norms: list
    residuals: list
    lambdas: list
    T: float
    prec: int
    seq: object = field(repr=False, default=None)

    @property
    def N(self) -> int:
        return len(self.coeffs)

    @property
    def residual(self) -> float:
        return max(self.residuals)

    @property
    def real(self) -> bool:
        return all(not getattr(l, "imag", 0) for l in self.lambdas)

    def log_norms(self) -> np.ndarray:
        """Natural logarithms of ``||q_k||``."""
        with mp.workprec(2 * self.prec):
            return np.array([float(mp.log(x)) for x in self.norms])

    def log10_norms(self) -> np.ndarray:
        return self.log_norms() / math.log(10)

    def log2_norms(self) -> np.ndarray:
        return self.log_norms() / math.log(2)

    def evaluate(self, k: int, t):
        """``q_k(t)`` for 1-based ``k``."""
        with mp.workprec(2 * self.prec):
            t = mp.mpf(t)
            return mp.fsum(c * mp.exp(-la.conj(l) * t) for c, l in zip(self.coeffs[k - 1], self.lambdas))

    def to_rows(self):
        lg = self.log10_norms()
        for k in range(self.N):
            yield k + 1, repr(float(lg[k])), repr(self.residuals[k])

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "log10_norm", "residual"])
            w.writerows(self.to_rows())

    def to_bundle(self) -> dict:
        """JSON-ready dict with exact base-16 coefficients."""
        return {
            "T": self.T,
            "prec": self.prec,
            "N": self.N,
            "lambdas": [_hex_complex(l) for l in self.lambdas],
            "coeffs": [[_hex_complex(c) for c in row] for row in self.coeffs],
            "log10_norms": [float(x) for x in self.log10_norms()],
            "residual": self.residual,
        }

    @classmethod
    def from_bundle(cls, doc: dict) -> "BiorthogonalFamily":
        prec = int(doc["prec"])
        with mp.workprec(2 * prec):
            lam = [_unhex_complex(s) for s in doc["lambdas"]]
            coeffs = [[_unhex_complex(s) for s in row] for row in doc["coeffs"]]
            G = _gram_lists(lam, mp.mpf(doc["T"]))
            # ||q_k||^2 = a^H G a with a = coeffs[k]
            norms = [mp.sqrt(abs(mp.fdot([la.conj(c) for c in coeffs[k]],
                                          [mp.fdot(G[m], coeffs[k]) for m in range(len(lam))])))
                     for k in range(len(lam))]
        res = [float(doc["residual"])] * len(lam)
        return cls(coeffs, norms, res, lam, float(doc["T"]), prec)


def _hex_real(x) -> str:
    """Exact ``[-]0x<mantissa>p<exponent>`` form (no rounding at any precision)."""
    if not isinstance(x, mpmath.mpf):
        x = mp.mpf(x)
    sign, man, exp, _ = x._mpf_
    if not man:
        return "0x0p0"
    return f"{'-' if sign else ''}0x{man:x}p{exp}"


def _unhex_real(s: str):
    neg = s.startswith("-")
    body = s[1:] if neg else s
    man_s, exp_s = body[2:].split("p")
    man = int(man_s, 16)
    return mp.make_mpf(from_man_exp(-man if neg else man, int(exp_s)))


def _hex_complex(z):
    if isinstance(z, mpmath.mpc):
        if z.imag:
            return [_hex_real(z.real), _hex_real(z.imag)]
        return _hex_real(z.real)
    return _hex_real(z)


def _unhex_complex(s):
    if isinstance(s, list):
        return mp.mpc(_unhex_real(s[0]), _unhex_real(s[1]))
    return _unhex_real(s)


def _gram_lists(lam, T):
    N = len(lam)
    G = [[None] * N for _ in range(N)]
    for j in range(N):
        for n in range(j, N):
            g = gram_entry(lam[j], lam[n], T)
            G[j][n] = g
            G[n][j] = la.conj(g)
    return G


def _build_once(seq, T, N, prec):
    """Factor, invert and refine at ``prec``; None when Cholesky breaks down."""
    real = seq.is_real
    with mp.workprec(prec):
        lam = _lambdas(seq, N, real)
        G = _gram_lists(lam, mp.mpf(T))
        L = la.cholesky(G)
        if L is None:
            return None
        X0 = la.inverse_from_tril_inverse(la.tril_inverse(L))
    with mp.workprec(2 * prec):
        lam2 = _lambdas(seq, N, real)
        G2 = _gram_lists(lam2, mp.mpf(T))
        GX = la.matmul(G2, X0)
        R = [[(1 if i == j else 0) - GX[i][j] for j in range(N)] for i in range(N)]
    with mp.workprec(prec):
        D = la.matmul(X0, R)
    with mp.workprec(2 * prec):
        X1 = la.hermitize([[X0[i][j] + D[i][j] for j in range(N)] for i in range(N)])
        GX = la.matmul(G2, X1)
        # residual of column k: max_j |(G X1)[j][k] - delta_jk|
        residuals = [
            float(max(abs(GX[j][k] - (1 if j == k else 0)) for j in range(N))) for k in range(N)
        ]
        diag = [mp.re(X1[k][k]) for k in range(N)]
        if any(not d > 0 for d in diag):
            return None
        norms = [mp.sqrt(d) for d in diag]
        # A[k][n] = conj(G^{-1})[k][n] = (G^{-1})[n][k]
        coeffs = [[X1[n][k] for n in range(N)] for k in range(N)]
    return BiorthogonalFamily(coeffs, norms, residuals, lam2, float(T), prec, seq.head(N))


def biorthogonal_family(seq, T, N=None, prec: int = DEFAULT_PREC, escalate: bool = True,
                        max_prec: int = MAX_PREC,
                        residual_bound: float = RESIDUAL_BOUND) -> BiorthogonalFamily:
    """Minimal-norm biorthogonal family to ``exp(-lambda_k t)``, k <= N, on (0, T).

    Cholesky at ``prec`` bits, one refinement step at ``2*prec``. With
    ``escalate`` the precision doubles (up to ``max_prec``) until the
    factorization succeeds and the biorthogonality defect is below
    ``residual_bound``.
    """
    N = _check_args(seq, T, N, prec)
    p = prec
    last = None
    while True:
        fam = _build_once(seq, T, N, p)
        if fam is not None and fam.residual <= residual_bound:
            return fam
        last = fam
        if not escalate or 2 * p > max_prec:
            break
        p *= 2
    if last is None:
        raise PrecisionTooLow(f"Cholesky failed up to {p} bits (N={N}, T={T})", p)
    raise ResidualTooLarge(f"biorthogonality defect {last.residual:.3g} above {residual_bound:g} "
                           f"at {p} bits (N={N}, T={T})")


def verify_biorthogonality(fam: BiorthogonalFamily, prec: int | None = None) -> float:
    """``max_{k,j} |int_0^T q_k(t) exp(-lambda_j t) dt - delta_kj|``.

    Each integral is re-derived as ``sum_n A[k, n] (1 - e^{-wT})/w`` with
    ``w = conj(lambda_n) + lambda_j``, at twice the construction precision.
    """
    prec = prec or 2 * fam.prec
    N = fam.N
    with mp.workprec(prec):
        T = mp.mpf(fam.T)
        lam = list(fam.lambdas)
        worst = mp.zero
        for j in range(N):
            kernel = []
            for n in range(N):
                w = la.conj(lam[n]) + lam[j]
                kernel.append((1 - mp.exp(-w * T)) / w)
            for k in range(N):
                val = mp.fdot(fam.coeffs[k], kernel) - (1 if j == k else 0)
                worst = max(worst, abs(val))
    return float(worst)


@dataclass
class NormBoundReport:
    """Empirical constants for ``||q_k|| <= C exp(C sqrt(Re lambda_k) + C/T) prod |lambda_k - lambda_n|^-1``.

    ``L[k]`` is ``log ||q_k||`` plus the log of the product over the
    ``1 <= |k-n| < q`` neighbors; ``C`` is the smallest constant with
    ``L_k <= log C + C (sqrt(Re lambda_k) + 1/T)`` for all k, ``slack[k]`` the
    margin. ``envelope`` is the smallest C' with ``L_k <= C' (sqrt(Re lambda_k) + 1/T + 1)``.
    """

    q: int
    T: float
    C: float
    envelope: float
    L: list
    raw_log_norms: list
    slack: list


def _smallest_c(L, s):
    # log C + C s is increasing in C; bracket the root of log C + C s - L
    f = lambda c: math.log(c) + c * s - L
    lo, hi = 1e-300, 1.0
    while f(hi) < 0:
        hi *= 2
    return brentq(f, lo, hi, xtol=1e-300, rtol=1e-14) if f(lo) < 0 else lo


def norm_bound_report(fam: BiorthogonalFamily, q: int) -> NormBoundReport:
    if q < 1:
        raise ValueError(f"q must be a positive integer, got {q}")
    raw = fam.log_norms()
    N = fam.N
    Ls, ss = [], []
    with mp.workprec(2 * fam.prec):
        for k in range(N):
            corr = mp.zero
            for n in range(max(0, k - q + 1), min(N, k + q)):
                if n != k:
                    corr += mp.log(abs(fam.lambdas[k] - fam.lambdas[n]))
            Ls.append(float(raw[k] + corr))
            ss.append(float(mp.sqrt(mp.re(fam.lambdas[k]))) + 1.0 / fam.T)
    C = max(_smallest_c(L, s) for L, s in zip(Ls, ss))
    slack = [math.log(C) + C * s - L for L, s in zip(Ls, ss)]
    envelope = max(0.0, max(L / (s + 1) for L, s in zip(Ls, ss)))
    return NormBoundReport(q, fam.T, C, envelope, Ls, [float(x) for x in raw], slack)


def condensation_slope(fam: BiorthogonalFamily, gamma: float, ks=None):
    """Least-squares slope of ``log ||q_k||`` against ``ceil(k/2)^(2 gamma)``.

    Returns ``(slope, intercept)`` of the ordinary straight-line fit over the
    1-based indices ``ks`` (default: all k).
    """
    raw = fam.log_norms()
    ks = np.arange(1, fam.N + 1) if ks is None else np.asarray(ks)
    x = np.ceil(ks / 2.0) ** (2 * gamma)
    slope, intercept = np.polyfit(x, raw[ks - 1], 1)
    return float(slope), float(intercept)


def dump_bundle(fam: BiorthogonalFamily, path, meta: dict | None = None):
    doc = {"meta": meta or {}, "family": fam.to_bundle()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
