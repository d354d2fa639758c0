"""Truncated control cost K_N(T) and its small-time scaling laws.

For unit-weighted data ``z`` (``y_{0,k} = z_k / sqrt(w_k)``) the minimal-norm
control has ``||v||^2 = d^H G^{-1} d`` with ``d = M z`` and the diagonal map
``M_kk = -exp(-lambda_k T) / (sqrt(w_k) b_k)``. Hence

    K_N(T)^2 = lambda_max(M^H G^{-1} M),

the exact cost of the N-mode truncated problem (a lower bound for the full
cost, nondecreasing in N).
"""
from __future__ import annotations

import csv
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from mpmath import mp

from .biorthogonal import DEFAULT_PREC, MAX_PREC, biorthogonal_family
from .control import MomentProblem, modal_data, synthesize_control
from .errors import DegenerateDesign, InsufficientSamples, MomentLabError
from .spectra import SystemSpec, generate

DENSE_MAX_N = 64
POWER_RTOL = 1e-8
CONVERGENCE_RTOL = 1e-3
CONVERGENCE_STEP = 5


def default_T_grid(n: int = 12, lo: float = 0.04, hi: float = 0.8) -> list:
    return [float(t) for t in np.geomspace(lo, hi, n)]


def _weight_map(spec, fam, seq):
    md = modal_data(spec, seq)
    with mp.workprec(2 * fam.prec):
        T = mp.mpf(fam.T)
        mu = [-mp.exp(-mp.mpc(l) * T) / (mp.sqrt(w) * mp.mpc(b))
              for l, w, b in zip(fam.lambdas, md.weights, md.observation)]
    return mu, md


def _cost_matrix(fam, mu):
    """``H = M^H G^{-1} M`` with ``(G^{-1})[i][j] = coeffs[j][i]``."""
    N = fam.N
    return [[mu[i].conjugate() * fam.coeffs[j][i] * mu[j] for j in range(N)] for i in range(N)]


def _power_lambda_max(apply, n, rtol=POWER_RTOL, max_iter=20000, seed=0):
    rng = random.Random(seed)
    z = [mp.mpc(rng.gauss(0, 1), rng.gauss(0, 1)) for _ in range(n)]
    nz = mp.sqrt(mp.fsum(abs(x) ** 2 for x in z))
    z = [x / nz for x in z]
    prev = None
    for _ in range(max_iter):
        hz = apply(z)
        ray = mp.re(mp.fdot(hz, z, conjugate=True))
        nrm = mp.sqrt(mp.fsum(abs(x) ** 2 for x in hz))
        if nrm == 0:
            return mp.zero
        z = [x / nrm for x in hz]
        if prev is not None and abs(ray - prev) <= rtol * abs(ray):
            return ray
        prev = ray
    return ray


def lambda_max_hermitian(H, rtol=POWER_RTOL):
    """Largest eigenvalue: dense Hermitian eigen-solve up to 64 rows, power iteration above."""
    n = len(H)
    if n <= DENSE_MAX_N:
        ev = mp.eighe(mp.matrix(H), eigvals_only=True)
        return max(mp.re(e) for e in ev)
    return _power_lambda_max(lambda z: [mp.fdot(row, z) for row in H], n, rtol)


@dataclass
class CostSample:
    T: float
    log_K: float
    N: int
    prec: int
    converged: bool = False
    log_K_prev: float | None = None
    error: str | None = None

    @property
    def log10_K(self) -> float:
        return self.log_K / math.log(10)


def _family(spec, T, N, prec, seq=None):
    seq = (seq or generate(spec, N)).head(N)
    return biorthogonal_family(seq, T, N, prec=prec, max_prec=MAX_PREC), seq


def control_cost(spec: SystemSpec, T, N: int, prec: int = DEFAULT_PREC, seq=None) -> float:
    """``log K_N(T)`` (natural log) of the N-mode truncated problem."""
    return cost_sample(spec, T, N, prec, seq=seq, step=0).log_K


def cost_sample(spec: SystemSpec, T, N: int, prec: int = DEFAULT_PREC, seq=None,
                step: int = CONVERGENCE_STEP) -> CostSample:
    """``log K_N(T)`` with the ``N - step`` comparison used as convergence flag."""
    if not T > 0:
        raise ValueError(f"horizon T must be positive, got {T}")
    seq = seq or generate(spec, N)
    fam, sub = _family(spec, T, N, prec, seq)
    mu, _ = _weight_map(spec, fam, sub)
    with mp.workprec(2 * fam.prec):
        lam_max = lambda_max_hermitian(_cost_matrix(fam, mu))
        log_K = float(mp.log(lam_max) / 2)
    sample = CostSample(float(T), log_K, N, fam.prec)
    if step and N - step >= 1:
        prev = cost_sample(spec, T, N - step, prec, seq=seq, step=0)
        sample.log_K_prev = prev.log_K
        sample.converged = abs(log_K - prev.log_K) <= CONVERGENCE_RTOL * abs(log_K)
    return sample


def cost_by_power_iteration(spec: SystemSpec, T, N: int, prec: int = DEFAULT_PREC,
                            rtol: float = POWER_RTOL, seed: int = 0, seq=None) -> float:
    """Independent ``log K_N(T)``: power iteration driven by :func:`synthesize_control`.

    Applying the data-to-control map to unit data ``z`` gives coefficients
    ``c = G^{-1} M z``; ``M^H c`` is then the action of the cost operator,
    and ``||v||^2 / ||z||^2`` its Rayleigh quotient.
    """
    fam, sub = _family(spec, T, N, prec, seq)
    mu, md = _weight_map(spec, fam, sub)

    def apply(z):
        y0 = [x / mp.sqrt(w) for x, w in zip(z, md.weights)]
        prob = MomentProblem([-y / b for y, b in zip(y0, md.observation)], fam.T,
                             md.observation, md.weights, y0, list(sub.values), real_data=False)
        v = synthesize_control(fam, prob)
        return [m.conjugate() * c for m, c in zip(mu, v.coeffs)]

    with mp.workprec(2 * fam.prec):
        lam_max = _power_lambda_max(apply, N, rtol, seed=seed)
        return float(mp.log(lam_max) / 2)


@dataclass
class CostCurve:
    samples: list
    system: dict = field(default_factory=dict)

    def converged(self) -> list:
        return [s for s in self.samples if s.converged and s.error is None and math.isfinite(s.log_K)]

    @property
    def T(self) -> np.ndarray:
        return np.array([s.T for s in self.samples])

    @property
    def log_K(self) -> np.ndarray:
        return np.array([s.log_K for s in self.samples])

    def to_csv(self, path, header_comment: str | None = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "log10_K", "N", "precision", "converged"])
            for s in self.samples:
                w.writerow([repr(s.T), repr(s.log10_K), s.N, s.prec, int(s.converged)])

    def to_dict(self) -> dict:
        return {"system": self.system, "samples": [asdict(s) for s in self.samples]}


def _sweep_point(args):
    spec, T, N, prec = args
    try:
        return cost_sample(spec, T, N, prec)
    except MomentLabError as exc:
        return CostSample(float(T), math.nan, N, prec, False, None, f"{type(exc).__name__}: {exc}")


def cost_sweep(spec: SystemSpec, T_grid, N: int, prec: int = DEFAULT_PREC, jobs: int = 1) -> CostCurve:
    """``log K_N(T)`` over a grid; failures are recorded per sample, not raised."""
    grid = sorted(float(t) for t in T_grid)
    if len(grid) < 6:
        raise InsufficientSamples(f"T grid needs at least 6 points, got {len(grid)}")
    if any(not t > 0 for t in grid):
        raise ValueError("T grid must be positive")
    tasks = [(spec, t, N, prec) for t in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(_sweep_point, tasks))
    else:
        samples = [_sweep_point(t) for t in tasks]
    return CostCurve(samples, spec.to_dict())


# ----------------------------------------------------------------------
# scaling-law regression
# ----------------------------------------------------------------------

@dataclass
class FitResult:
    """``log K = a + b/T`` (model A) or ``a + b/T + c/T^e``, ``e = gamma/(1-gamma)`` (model B)."""

    model: str
    a: float
    b: float
    c: float | None
    r2: float
    gamma: float | None = None
    exponent: float | None = None
    n_samples: int = 0
    sample_set: str = "converged"

    def predict(self, T):
        T = np.asarray(T, dtype=float)
        out = self.a + self.b / T
        if self.model == "B":
            out = out + self.c / T ** self.exponent
        return out

    def contributions(self, T) -> dict:
        """Size of each growth term at horizon ``T``."""
        out = {"1/T": self.b / T}
        if self.model == "B":
            out[f"1/T^{self.exponent:g}"] = self.c / T ** self.exponent
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _design(T, model, exponent):
    cols = [np.ones_like(T), 1.0 / T]
    if model == "B":
        cols.append(1.0 / T ** exponent)
    return np.column_stack(cols)


SAMPLE_SETS = ("converged", "all", "auto")


def fit_scaling(curve, model: str = "A", gamma: float | None = None,
                samples: str = "converged") -> FitResult:
    """Ordinary least squares of ``log K`` on the model's powers of ``1/T``.

    ``samples`` selects the data: ``"converged"`` (flagged samples only),
    ``"all"`` (every finite sample, i.e. a fit of the fixed-N truncated cost)
    or ``"auto"`` (converged when at least four are, otherwise all). The
    choice made is stored in ``FitResult.sample_set``. The model-B exponent
    is fixed at ``gamma/(1-gamma)``, never fitted.
    """
    model = model.upper()
    if model not in ("A", "B"):
        raise ValueError(f"model must be 'A' or 'B', got {model!r}")
    if samples not in SAMPLE_SETS:
        raise ValueError(f"samples must be one of {SAMPLE_SETS}, got {samples!r}")
    finite = [s for s in curve.samples if s.error is None and math.isfinite(s.log_K)]
    conv = [s for s in finite if s.converged]
    if samples == "auto":
        samples = "converged" if len(conv) >= 4 else "all"
    chosen = conv if samples == "converged" else finite
    if len(chosen) < 4:
        raise InsufficientSamples(f"need at least 4 {samples} samples, got {len(chosen)}")
    sample_set, samples = samples, chosen
    exponent = None
    if model == "B":
        if gamma is None or not 0 < float(gamma) < 1:
            raise ValueError("model B needs gamma in (0, 1)")
        gamma = float(gamma)
        exponent = gamma / (1 - gamma)
        if abs(exponent - 1) < 1e-9:
            raise DegenerateDesign("gamma = 1/2 makes both growth terms 1/T")
    T = np.array([s.T for s in samples])
    y = np.array([s.log_K for s in samples])
    X = _design(T, model, exponent)
    if len(samples) < X.shape[1] + 1:
        raise InsufficientSamples(f"{len(samples)} samples for {X.shape[1]} coefficients")
    Xn = X / np.linalg.norm(X, axis=0)
    sv = np.linalg.svd(Xn, compute_uv=False)
    if sv[-1] <= 1e-10 * sv[0]:
        raise DegenerateDesign(f"basis functions collinear on this grid (condition {sv[0] / sv[-1]:.3g})")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    r2 = min(max(r2, 0.0), 1.0)
    c = float(coef[2]) if model == "B" else None
    return FitResult(model, float(coef[0]), float(coef[1]), c, r2, gamma, exponent, len(samples), sample_set)


def gnuplot_script(curve: CostCurve, fits, data_file: str, title: str = "control cost") -> str:
    """Plain-text gnuplot script drawing the samples and fitted curves."""
    lines = [
        f"set title '{title}'",
        "set xlabel 'T'",
        "set ylabel 'log10 K_N(T)'",
        "set datafile separator ','",
        "set key top right",
    ]
    plots = [f"'{data_file}' using 1:2 skip 2 with points pt 7 title 'K_N(T)'"]
    for fit in fits:
        expr = f"({fit.a!r} + {fit.b!r}/x"
        if fit.model == "B":
            expr += f" + {fit.c!r}/x**{fit.exponent!r}"
        expr += ")/log(10)"
        plots.append(f"{expr} with lines title 'model {fit.model} (R^2={fit.r2:.4f})'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def dump_fit(fit: FitResult, path, meta: dict | None = None):
    with open(path, "w") as fh:
        json.dump({"meta": meta or {}, "fit": fit.to_dict()}, fh, indent=1, sort_keys=True)
        fh.write("\n")
