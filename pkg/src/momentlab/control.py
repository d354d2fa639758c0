"""Moment-method synthesis of boundary null controls and their closed-form check.

Mode ``k`` of every system evolves as

    y_k(T) = exp(-lambda_k T) y_{0,k} + b_k int_0^T exp(-lambda_k (T-s)) v(s) ds,

where ``y_{0,k}`` is the (bilinear) pairing of the datum with the k-th
adjoint eigenfunction and ``b_k`` the boundary observation of that
eigenfunction. With ``u(t) = v(T-t)`` the terminal state vanishes iff
``int_0^T exp(-lambda_k t) u(t) dt = exp(-lambda_k T) m_k`` with
``m_k = -y_{0,k} / b_k``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from mpmath import mp

from . import _mplinalg as la
from .biorthogonal import BiorthogonalFamily, gram_entry
from .errors import InvalidSpec, VanishingObservation
from .spectra import (
    COMPLEX2X2, CONDENSING, CUSTOM, HEAT, PHASE_FIELD, SystemSpec, generate,
    modal_eigenpairs, to_mpf,
)

OBS_RTOL = 1e-14
REALITY_RTOL = 1e-10


@dataclass
class ModalData:
    """Observation coefficients, H^{-1} proxy weights and spatial indices per mode."""

    observation: list
    weights: list
    spatial: list
    vectors: list | None = None


def modal_data(spec: SystemSpec, seq) -> ModalData:
    """Boundary observation ``b_k`` and weight ``w_k = 1/n_k^2`` for every term of ``seq``.

    Vector systems use unit-norm adjoint eigenvectors (first component real
    positive); ``b_k = n sqrt(2/pi) B^T D^T w_k``.
    """
    spatial = seq.spatial_modes()
    weights = [1.0 / (n * n) for n in spatial]
    vectors = None
    with mp.workprec(seq.prec):
        if spec.kind == HEAT:
            obs = [k * mp.sqrt(2 / mp.pi) for k in spatial]
        elif spec.kind in (COMPLEX2X2, PHASE_FIELD):
            obs, vectors = [], []
            cache = {}
            for (n, branch), lam in zip(seq.labels, seq.values):
                if n not in cache:
                    cache[n] = modal_eigenpairs(spec, n, prec=seq.prec)
                pair = cache[n]
                mu, w = pair.values[branch], pair.vectors[branch]
                if abs(mu - lam) > 1e-12 * abs(lam):
                    raise InvalidSpec(f"mode ({n}, {branch}): eigenvalue mismatch with the sequence")
                if spec.kind == COMPLEX2X2:
                    bdw = w[1]  # B = (0, 1), D = I
                else:
                    bdw = to_mpf(spec.xi) * w[0]  # B = (1, 0), D^T first row = (xi, 0)
                obs.append(n * mp.sqrt(2 / mp.pi) * bdw)
                vectors.append(w)
        elif spec.kind == CONDENSING:
            obs = [mp.one] * seq.n_max
        else:
            if spec.observation is not None:
                raw = [spec.observation[n - 1] for n in spatial]
                obs = [mp.mpc(complex(x)) if not isinstance(x, str) else mp.mpc(complex(x.replace("i", "j")))
                       for x in raw]
            else:
                obs = [mp.one] * seq.n_max
            weights = [1.0 / (k * k) for k in range(1, seq.n_max + 1)]
    return ModalData(obs, weights, spatial, vectors)


def modal_coefficients(spec: SystemSpec, seq, vector_coeffs) -> list:
    """Pair spatial sine coefficients with the adjoint eigenvectors.

    ``vector_coeffs[n-1]`` is the 2-vector ``Y_n`` in
    ``y0 = sum_n sqrt(2/pi) sin(n x) Y_n``; the k-th modal coefficient is
    ``Y_{n_k} . w_k`` (no conjugation).
    """
    md = modal_data(spec, seq)
    if md.vectors is None:
        raise InvalidSpec("modal_coefficients needs a 2x2 system", field="kind")
    out = []
    with mp.workprec(seq.prec):
        for n, w in zip(md.spatial, md.vectors):
            if n <= len(vector_coeffs):
                Y = vector_coeffs[n - 1]
                out.append(mp.mpc(Y[0]) * w[0] + mp.mpc(Y[1]) * w[1])
            else:
                out.append(mp.mpc(0))
    return out


def _conjugate_partners(lambdas):
    """Index of the conjugate partner of every value (itself when real)."""
    partner = []
    for k, l in enumerate(lambdas):
        if not getattr(l, "imag", 0):
            partner.append(k)
            continue
        target = l.conjugate()
        j = min(range(len(lambdas)), key=lambda i: abs(lambdas[i] - target))
        partner.append(j if abs(lambdas[j] - target) <= 1e-20 * abs(l) else None)
    return partner


@dataclass
class MomentProblem:
    """Targets ``m_k`` of ``int_0^T exp(-lambda_k t) u(t) dt = exp(-lambda_k T) m_k``."""

    targets: list
    T: float
    observation: list
    weights: list
    y0: list
    lambdas: list
    real_data: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return len(self.targets)

    def y0_norm(self) -> float:
        """Weighted coefficient norm ``(sum_k w_k |y_{0,k}|^2)^(1/2)``."""
        return math.sqrt(sum(w * float(abs(y)) ** 2 for w, y in zip(self.weights, self.y0)))


def moments_from_initial_data(spec: SystemSpec, y0_coeffs, T, N=None, seq=None) -> MomentProblem:
    """Moment targets ``m_k = -y_{0,k} / b_k`` for the first ``N`` modes.

    ``y0_coeffs`` are modal coefficients in the ordering of the eigenvalue
    sequence; missing entries are zero.
    """
    if not T > 0:
        raise InvalidSpec(f"horizon T must be positive, got {T}", field="T")
    y0_coeffs = list(y0_coeffs)
    if N is None:
        N = seq.n_max if seq is not None else max(len(y0_coeffs), 1)
    if len(y0_coeffs) > N:
        raise InvalidSpec(f"{len(y0_coeffs)} initial coefficients for only N={N} modes", field="y0")
    if seq is None:
        seq = generate(spec, N)
    seq = seq.head(N)
    md = modal_data(spec, seq)
    with mp.workprec(seq.prec):
        y0 = [mp.mpc(y) if not isinstance(y, str) else mp.mpc(complex(y.replace("i", "j")))
              for y in y0_coeffs]
        y0 += [mp.mpc(0)] * (N - len(y0))
        scale = max(abs(b) for b in md.observation)
        for k, b in enumerate(md.observation, start=1):
            if abs(b) <= OBS_RTOL * scale:
                raise VanishingObservation(f"observation coefficient of mode {k} vanishes")
        targets = [-y / b for y, b in zip(y0, md.observation)]
        partners = _conjugate_partners(seq.values)
        real = all(
            j is not None
            and abs(targets[j] - targets[k].conjugate()) <= REALITY_RTOL * (abs(targets[k]) + mp.mpf(1e-300))
            for k, j in enumerate(partners)
        )
    meta = {"eigenvector_normalization": "unit Euclidean norm, first component real positive"}
    return MomentProblem(targets, float(T), md.observation, md.weights, y0, list(seq.values), real, meta)


@dataclass
class ControlSignal:
    """``v(t) = sum_n coeffs[n] exp(-conj(lambda_n) (T - t))`` on (0, T)."""

    coeffs: list
    lambdas: list
    T: float
    norm: object
    prec: int

    def __call__(self, t):
        with mp.workprec(self.prec):
            s = mp.mpf(self.T) - mp.mpf(t)
            return mp.fsum(c * mp.exp(-la.conj(mp.mpc(l)) * s) for c, l in zip(self.coeffs, self.lambdas))

    @property
    def log_norm(self) -> float:
        with mp.workprec(self.prec):
            return float(mp.log(self.norm)) if self.norm > 0 else -math.inf

    def moment(self, lam):
        """``int_0^T exp(-lam (T-s)) v(s) ds`` in closed form."""
        with mp.workprec(self.prec):
            T = mp.mpf(self.T)
            return mp.fsum(c * gram_entry(mp.mpc(lam), mp.mpc(l), T) for c, l in zip(self.coeffs, self.lambdas))

    def derivative_norm(self):
        """``||v'||_{L^2(0,T)}`` from the same closed-form Gram quadratic form."""
        with mp.workprec(self.prec):
            T = mp.mpf(self.T)
            lam = [mp.mpc(l) for l in self.lambdas]
            d = [c * la.conj(l) for c, l in zip(self.coeffs, lam)]
            Gd = [mp.fdot([gram_entry(lj, ln, T) for ln in lam], d) for lj in lam]
            return mp.sqrt(max(mp.re(mp.fdot(Gd, d, conjugate=True)), mp.zero))

    def sample(self, n: int = 101):
        ts = np.linspace(0.0, self.T, n)
        return ts, [self(t) for t in ts]

    def to_csv(self, path, n: int = 101, header_comment: str | None = None):
        ts, vs = self.sample(n)
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "v_re", "v_im"])
            for t, v in zip(ts, vs):
                v = mp.mpc(v)
                w.writerow([repr(float(t)), mp.nstr(v.real, 17), mp.nstr(v.imag, 17)])

    def to_bundle(self) -> dict:
        from .biorthogonal import _hex_complex

        with mp.workprec(self.prec):
            return {
                "T": self.T,
                "prec": self.prec,
                "coeffs": [_hex_complex(c) for c in self.coeffs],
                "lambdas": [_hex_complex(l) for l in self.lambdas],
                "log_norm": self.log_norm,
            }


def synthesize_control(fam: BiorthogonalFamily, prob: MomentProblem) -> ControlSignal:
    """``u = sum_k exp(-lambda_k T) m_k q_k``, returned as ``v(t) = u(T - t)``."""
    if fam.N != prob.N:
        raise ValueError(f"family has N={fam.N}, moment problem N={prob.N}")
    if abs(fam.T - prob.T) > 1e-15 * max(1.0, prob.T):
        raise ValueError("family and moment problem use different horizons")
    prec = 2 * fam.prec
    N = fam.N
    with mp.workprec(prec):
        for l, p in zip(fam.lambdas, prob.lambdas):
            if abs(mp.mpc(l) - mp.mpc(p)) > mp.mpf(2) ** (-prec // 2) * abs(p):
                raise ValueError("family and moment problem have different spectra")
        T = mp.mpf(fam.T)
        lam = fam.lambdas
        d = [mp.exp(-mp.mpc(l) * T) * mp.mpc(m) for l, m in zip(lam, prob.targets)]
        cols = [[fam.coeffs[k][n] for k in range(N)] for n in range(N)]
        c = [mp.fdot(d, cols[n]) for n in range(N)]
        if prob.real_data:
            partners = _conjugate_partners(lam)
            sym = list(c)
            for n, j in enumerate(partners):
                sym[n] = (c[n] + la.conj(c[j])) / 2 if j != n else mp.mpc(mp.re(c[n]))
            c = sym
        # ||u||^2 = c^H G c
        G = [[gram_entry(mp.mpc(lam[j]), mp.mpc(lam[n]), T) for n in range(N)] for j in range(N)]
        Gc = [mp.fdot(G[j], c) for j in range(N)]
        sq = mp.re(mp.fdot(Gc, c, conjugate=True))
        norm = mp.sqrt(max(sq, mp.zero))
    return ControlSignal(c, list(lam), fam.T, norm, prec)


@dataclass
class NullControlReport:
    """Terminal modal amplitudes ``|y_k(T)|`` for k = 1..n_check."""

    residuals: list
    N: int
    y0_norm: float
    control_norm: float
    envelope: list = field(default_factory=list)
    l2_bound: list = field(default_factory=list)

    @property
    def controlled(self) -> list:
        return self.residuals[: self.N]

    @property
    def spillover(self) -> list:
        return self.residuals[self.N:]

    @property
    def max_controlled(self) -> float:
        return max(self.controlled)

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "abs_yk_T", "controlled", "envelope"])
            for k, r in enumerate(self.residuals, start=1):
                env = self.envelope[k - 1] if self.envelope else ""
                w.writerow([k, repr(r), int(k <= self.N), repr(env)])

    @property
    def envelope_holds(self) -> bool:
        """Every spillover amplitude lies under the envelope."""
        return all(r <= e for r, e in zip(self.spillover, self.envelope[self.N:]))

    @property
    def envelope_decreasing(self) -> bool:
        """Envelope over the spillover modes is nonincreasing and ends strictly lower."""
        env = self.envelope[self.N:]
        return all(b <= a for a, b in zip(env, env[1:])) and (len(env) < 2 or env[-1] < env[0])


def verify_null_control(spec: SystemSpec, prob: MomentProblem, v: ControlSignal,
                        n_check: int | None = None, seq=None) -> NullControlReport:
    """Evaluate ``y_k(T)`` by the closed-form Duhamel formula.

    Modes beyond ``prob.N`` start from zero (the datum is supported on the
    controlled modes) and only see the control: that spillover is reported,
    not forced to vanish. With ``a = Re lambda_k`` three bounds on the control
    term are computed:

    * ``|b_k| sup|v| (1 - e^{-aT}) / a`` with ``sup|v| <= sum |c_n|``;
    * Cauchy-Schwarz, ``|b_k| ||v|| ((1 - e^{-2aT}) / 2a)^(1/2)`` (kept as ``l2_bound``);
    * integration by parts, ``|b_k| (|v(T)| + e^{-aT}|v(0)| + ||v'|| ((1 - e^{-2aT}) / 2a)^(1/2)) / |lambda_k|``.

    ``envelope`` is their pointwise minimum. For the heat family the first
    and last fall like 1/k while the Cauchy-Schwarz bound is flat.
    """
    N = prob.N
    n_check = n_check or N
    if n_check < N:
        raise ValueError(f"n_check={n_check} below N={N}")
    if seq is None:
        seq = generate(spec, n_check)
    seq = seq.head(n_check)
    if n_check > N:
        obs = prob.observation + modal_data(spec, seq).observation[N:]
    else:
        obs = prob.observation
    out, env, cs = [], [], []
    with mp.workprec(v.prec):
        T = mp.mpf(v.T)
        sup_v = mp.fsum(abs(c) for c in v.coeffs)
        v_T, v_0, dv = abs(v(v.T)), abs(v(0)), v.derivative_norm()
        for k in range(n_check):
            lam = mp.mpc(prob.lambdas[k]) if k < N else mp.mpc(seq.values[k])
            free = mp.exp(-lam * T) * prob.y0[k] if k < N else mp.zero
            y = free + obs[k] * v.moment(lam)
            out.append(float(abs(y)))
            a = mp.re(lam)
            b = abs(obs[k])
            root = mp.sqrt(-mp.expm1(-2 * a * T) / (2 * a))
            l2 = b * v.norm * root
            linf = b * sup_v * -mp.expm1(-a * T) / a
            parts = b * (v_T + mp.exp(-a * T) * v_0 + dv * root) / abs(lam)
            cs.append(float(l2))
            env.append(float(min(linf, l2, parts)))
    return NullControlReport(out, N, prob.y0_norm(), float(v.norm), env, cs)


def dump_control_bundle(v: ControlSignal, path, meta: dict | None = None):
    with open(path, "w") as fh:
        json.dump({"meta": meta or {}, "control": v.to_bundle()}, fh, indent=1, sort_keys=True)
        fh.write("\n")
