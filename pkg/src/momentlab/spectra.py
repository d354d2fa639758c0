"""Eigenvalue sequences of the boundary-controlled 1D parabolic systems.

Every sequence is generated at extended precision: the condensing spectrum
has pair gaps ``exp(-n**(2*gamma))`` that vanish in double precision long
before the moduli stop being representable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real

import mpmath
import numpy as np
from mpmath import mp

from .errors import CoincidentEigenvalues, DefectiveMode, InvalidSpec

HEAT = "heat"
COMPLEX2X2 = "complex2x2"
PHASE_FIELD = "phase_field"
CONDENSING = "condensing"
CUSTOM = "custom"
KINDS = (HEAT, COMPLEX2X2, PHASE_FIELD, CONDENSING, CUSTOM)

_KIND_ALIASES = {
    "heat": HEAT,
    "complex2x2": COMPLEX2X2,
    "complex": COMPLEX2X2,
    "phasefield": PHASE_FIELD,
    "condensing": CONDENSING,
    "custom": CUSTOM,
}

_KIND_PARAMS = {
    HEAT: (),
    COMPLEX2X2: (),
    PHASE_FIELD: ("xi", "rho", "tau"),
    CONDENSING: ("gamma",),
    CUSTOM: ("values", "observation"),
}

# smallest gap-window for which each catalog system satisfies the weak gap
DEFAULT_Q = {HEAT: 1, COMPLEX2X2: 2, PHASE_FIELD: 2, CONDENSING: 2, CUSTOM: 1}

BASE_PREC = 256
COINCIDENCE_RTOL = 1e-10


def _number(value, name):
    """Parse a parameter, keeping exact rationals exact ("2/3" -> Fraction)."""
    if isinstance(value, bool):
        raise InvalidSpec(f"{name} must be a number", field=name)
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            raise InvalidSpec(f"{name}={value!r} is not a number", field=name) from None
    if isinstance(value, Real):
        if not math.isfinite(value):
            raise InvalidSpec(f"{name} must be finite", field=name)
        return float(value)
    raise InvalidSpec(f"{name} must be a number, got {type(value).__name__}", field=name)


def _complex_value(value, name):
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return mp.mpc(mp.mpf(_as_mpf_str(value[0])), mp.mpf(_as_mpf_str(value[1])))
    if isinstance(value, dict):
        return mp.mpc(mp.mpf(_as_mpf_str(value.get("re", 0))), mp.mpf(_as_mpf_str(value.get("im", 0))))
    if isinstance(value, str):
        s = value.strip().replace(" ", "").replace("i", "j")
        try:
            z = complex(s)
        except ValueError:
            raise InvalidSpec(f"{name}: cannot parse {value!r}", field=name) from None
        return mp.mpc(z)
    if isinstance(value, (mpmath.mpf, mpmath.mpc)):
        return mp.mpc(value)
    if isinstance(value, (Real, complex)):
        return mp.mpc(value)
    raise InvalidSpec(f"{name}: unsupported value {value!r}", field=name)


def _as_mpf_str(x):
    if isinstance(x, Fraction):
        return mp.mpf(x.numerator) / x.denominator
    if isinstance(x, str) and "/" in x:
        f = Fraction(x)
        return mp.mpf(f.numerator) / f.denominator
    return x


def to_mpf(x):
    """Convert a float, int, Fraction or mpf parameter to an mpf at current precision."""
    if isinstance(x, Fraction):
        return mp.mpf(x.numerator) / x.denominator
    return mp.mpf(x)


@dataclass(frozen=True)
class SystemSpec:
    """Catalog entry for one boundary-control system.

    ``xi``, ``rho`` and ``tau`` (thermal diffusivity, latent heat, relaxation
    time) belong to the phase-field system, ``gamma`` to the condensing one,
    ``values``/``observation`` to custom sequences.  Parameters given as ints,
    Fractions or "p/q" strings stay exact rationals.
    """

    kind: str
    xi: Fraction | float | None = None
    rho: Fraction | float | None = None
    tau: Fraction | float | None = None
    gamma: Fraction | float | None = None
    values: tuple | None = None
    observation: tuple | None = None

    def __post_init__(self):
        kind = _KIND_ALIASES.get(str(self.kind).lower().replace("_", "").replace("-", ""))
        if kind is None:
            raise InvalidSpec(f"unknown system kind {self.kind!r}", field="kind")
        object.__setattr__(self, "kind", kind)
        stray = [n for n in ("xi", "rho", "tau", "gamma", "values", "observation")
                 if getattr(self, n) is not None and n not in _KIND_PARAMS[kind]]
        if stray:
            raise InvalidSpec(f"{kind} takes no parameter(s) {stray}", field=stray[0])
        if kind == PHASE_FIELD:
            for name in ("xi", "rho", "tau"):
                v = getattr(self, name)
                if v is None:
                    raise InvalidSpec(f"phase_field requires {name}", field=name)
                v = _number(v, name)
                if v <= 0:
                    raise InvalidSpec(f"{name} must be positive, got {v}", field=name)
                object.__setattr__(self, name, v)
        elif kind == CONDENSING:
            if self.gamma is None:
                raise InvalidSpec("condensing requires gamma", field="gamma")
            g = _number(self.gamma, "gamma")
            if not 0 < g < 1:
                raise InvalidSpec(f"gamma must lie in (0, 1), got {g}", field="gamma")
            object.__setattr__(self, "gamma", g)
        elif kind == CUSTOM:
            if not self.values:
                raise InvalidSpec("custom system requires a non-empty value list", field="values")
            object.__setattr__(self, "values", tuple(self.values))
            if self.observation is not None:
                obs = tuple(self.observation)
                if len(obs) != len(self.values):
                    raise InvalidSpec("observation must match values in length", field="observation")
                object.__setattr__(self, "observation", obs)

    # convenience constructors
    @classmethod
    def heat(cls):
        return cls(HEAT)

    @classmethod
    def complex2x2(cls):
        return cls(COMPLEX2X2)

    @classmethod
    def phase_field(cls, xi, rho, tau):
        return cls(PHASE_FIELD, xi=xi, rho=rho, tau=tau)

    @classmethod
    def condensing(cls, gamma):
        return cls(CONDENSING, gamma=gamma)

    @classmethod
    def custom(cls, values, observation=None):
        return cls(CUSTOM, values=tuple(values), observation=observation)

    @property
    def default_q(self) -> int:
        return DEFAULT_Q[self.kind]

    @property
    def is_exact(self) -> bool:
        """True when every phase-field parameter is an exact rational."""
        return self.kind == PHASE_FIELD and all(
            isinstance(getattr(self, n), Fraction) for n in ("xi", "rho", "tau")
        )

    def params(self) -> dict:
        out = {}
        for name in ("xi", "rho", "tau", "gamma"):
            v = getattr(self, name)
            if v is not None:
                out[name] = str(v) if isinstance(v, Fraction) else v
        if self.values is not None:
            out["values"] = [_jsonable(v) for v in self.values]
        if self.observation is not None:
            out["observation"] = [_jsonable(v) for v in self.observation]
        return out

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params()}

    @classmethod
    def from_dict(cls, doc: dict) -> "SystemSpec":
        if not isinstance(doc, dict) or "kind" not in doc:
            raise InvalidSpec("system must be an object with a 'kind' field", field="kind")
        extra = sorted(set(doc) - {"kind", "params"})
        if extra:
            raise InvalidSpec(f"unknown system field(s) {extra}; parameters go under 'params'",
                              field=extra[0])
        params = doc.get("params") or {}
        if not isinstance(params, dict):
            raise InvalidSpec("params must be an object", field="params")
        allowed = {"xi", "rho", "tau", "gamma", "values", "observation"}
        unknown = set(params) - allowed
        if unknown:
            raise InvalidSpec(f"unknown parameter(s) {sorted(unknown)}", field="params")
        values = params.get("values")
        obs = params.get("observation")
        return cls(
            doc["kind"],
            xi=params.get("xi"),
            rho=params.get("rho"),
            tau=params.get("tau"),
            gamma=params.get("gamma"),
            values=tuple(values) if values is not None else None,
            observation=tuple(obs) if obs is not None else None,
        )


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (mpmath.mpc, complex)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, mpmath.mpf):
        return float(v)
    return v


@dataclass(frozen=True)
class EigenvalueSequence:
    """Ordered eigenvalues ``lambda_1, lambda_2, ...`` at extended precision.

    ``labels[i]`` is ``(spatial_mode, branch)`` for the i-th value when the
    system has that structure (branch 0 for scalar spectra), which records how
    merged sequences were permuted.
    """

    values: tuple
    ordering: str
    source: SystemSpec
    prec: int = BASE_PREC
    labels: tuple | None = None

    def __post_init__(self):
        if self.ordering not in ("by-modulus", "native"):
            raise InvalidSpec(f"unknown ordering {self.ordering!r}", field="ordering")
        if not self.values:
            raise InvalidSpec("empty eigenvalue sequence", field="n_max")
        with mp.workprec(self.prec):
            vals = tuple(mp.mpc(v) for v in self.values)
            object.__setattr__(self, "values", vals)
            for k, v in enumerate(vals, start=1):
                if not v.real > 0:
                    raise InvalidSpec(f"Re(lambda_{k}) = {mp.nstr(v.real, 8)} is not positive")
            order = sorted(range(len(vals)), key=lambda i: (vals[i].real, vals[i].imag))
            dup = [
                (order[j] + 1, order[j + 1] + 1)
                for j in range(len(order) - 1)
                if vals[order[j]] == vals[order[j + 1]]
            ]
            if dup:
                raise CoincidentEigenvalues(f"repeated eigenvalues at indices {dup}", dup)
            if self.ordering == "by-modulus":
                mods = [abs(v) for v in vals]
                for k in range(len(mods) - 1):
                    if mods[k] > mods[k + 1]:
                        raise InvalidSpec(f"|lambda_{k + 1}| > |lambda_{k + 2}| in a by-modulus sequence")

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]

    @property
    def n_max(self) -> int:
        return len(self.values)

    @property
    def is_real(self) -> bool:
        return all(v.imag == 0 for v in self.values)

    def head(self, n: int) -> "EigenvalueSequence":
        """The first ``n`` terms as a new sequence."""
        if not 1 <= n <= self.n_max:
            raise InvalidSpec(f"prefix length {n} outside 1..{self.n_max}", field="N")
        labels = self.labels[:n] if self.labels is not None else None
        return EigenvalueSequence(self.values[:n], self.ordering, self.source, self.prec, labels)

    def spatial_modes(self) -> list[int]:
        if self.labels is not None:
            return [lab[0] for lab in self.labels]
        return list(range(1, self.n_max + 1))

    def as_complex(self) -> np.ndarray:
        return np.array([complex(v) for v in self.values])

    def moduli(self) -> np.ndarray:
        return np.array([float(abs(v)) for v in self.values])

    def to_rows(self, digits: int = 30):
        for k, v in enumerate(self.values, start=1):
            yield k, mp.nstr(v.real, digits), mp.nstr(v.imag, digits)

    def to_csv(self, path, header_comment: str | None = None, digits: int = 30):
        with open(path, "w", newline="") as fh:
            if header_comment:
                fh.write(f"# {header_comment}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "re", "im"])
            w.writerows(self.to_rows(digits))


def sort_key(z):
    """By-modulus order, equal moduli broken by ascending imaginary part."""
    return (abs(z), z.imag)


def generation_prec(spec: SystemSpec, n_max: int) -> int:
    """Bits needed to keep every gap of the first ``n_max`` terms resolved."""
    bits = BASE_PREC
    if spec.kind == CONDENSING:
        n = (n_max + 1) // 2
        gap_bits = float(n) ** (2 * float(spec.gamma)) / math.log(2)
        bits = max(bits, int(gap_bits + 2 * math.log2(n + 1)) + 128)
    return bits


def heat_sequence(n_max: int) -> EigenvalueSequence:
    """Dirichlet Laplacian on (0, pi): ``lambda_k = k**2``."""
    _check_n(n_max)
    with mp.workprec(BASE_PREC):
        vals = tuple(mp.mpc(k * k) for k in range(1, n_max + 1))
    labels = tuple((k, 0) for k in range(1, n_max + 1))
    return EigenvalueSequence(vals, "by-modulus", SystemSpec.heat(), BASE_PREC, labels)


def complex2x2_sequence(n_max: int) -> EigenvalueSequence:
    """Spectrum ``{n^2 - i, n^2 + i}`` interleaved so the ``-i`` partner comes first."""
    _check_n(n_max)
    vals, labels = [], []
    with mp.workprec(BASE_PREC):
        for k in range(1, n_max + 1):
            if k % 2:
                n = (k + 1) // 2
                vals.append(mp.mpc(n * n, -1))
                labels.append((n, 0))
            else:
                n = k // 2
                vals.append(mp.mpc(n * n, 1))
                labels.append((n, 1))
    return EigenvalueSequence(tuple(vals), "by-modulus", SystemSpec.complex2x2(), BASE_PREC, tuple(labels))


def phase_field_branches(xi, rho, tau, n_max: int, prec: int = BASE_PREC):
    """Both eigenvalue branches ``xi k^2 + (rho+1)/(2 tau) -/+ r_k`` for k = 1..n_max."""
    with mp.workprec(prec):
        xi_, rho_, tau_ = to_mpf(xi), to_mpf(rho), to_mpf(tau)
        c = (rho_ + 1) / (2 * tau_)
        lo, hi = [], []
        for k in range(1, n_max + 1):
            r = mp.sqrt(xi_ * rho_ / tau_ * k * k + c * c)
            lo.append(xi_ * k * k + c - r)
            hi.append(xi_ * k * k + c + r)
    return lo, hi


def phase_field_sequence(xi, rho, tau, n_max: int, exact: bool | None = None,
                         rtol: float = COINCIDENCE_RTOL) -> EigenvalueSequence:
    """Merged, increasingly sorted phase-field spectrum.

    Raises CoincidentEigenvalues when a low-branch value meets a high-branch
    one. With ``exact`` (default: when all parameters are rationals) the test
    is the exact integer-rational form of that coincidence; otherwise neighbors
    closer than ``rtol`` relative are flagged.
    """
    _check_n(n_max)
    spec = SystemSpec.phase_field(xi, rho, tau)
    if exact is None:
        exact = spec.is_exact
    if exact:
        from .hypotheses import check_H2

        bad = check_H2(spec.xi, spec.rho, spec.tau, max(n_max, 2), exact=True)
        bad = [(k, l) for k, l in bad if l <= n_max]
        if bad:
            raise CoincidentEigenvalues(
                f"lambda^(2)_k == lambda^(1)_l for (k, l) in {bad[:5]}", bad)
    lo, hi = phase_field_branches(spec.xi, spec.rho, spec.tau, n_max)
    tagged = [(v, (k, 0)) for k, v in enumerate(lo, start=1)]
    tagged += [(v, (k, 1)) for k, v in enumerate(hi, start=1)]
    tagged.sort(key=lambda item: item[0])
    with mp.workprec(BASE_PREC):
        close = [
            (tagged[j][1], tagged[j + 1][1])
            for j in range(len(tagged) - 1)
            if tagged[j + 1][0] - tagged[j][0] <= rtol * abs(tagged[j + 1][0])
        ]
    if close:
        raise CoincidentEigenvalues(f"coincident phase-field eigenvalues (mode, branch): {close[:5]}", close)
    vals = tuple(mp.mpc(v) for v, _ in tagged)
    labels = tuple(lab for _, lab in tagged)
    return EigenvalueSequence(vals, "by-modulus", spec, BASE_PREC, labels)


def condensing_sequence(gamma, n_max: int) -> EigenvalueSequence:
    """Rearranged spectrum ``{n^2, n^2 + exp(-n^(2 gamma))}`` of the condensing system."""
    _check_n(n_max)
    spec = SystemSpec.condensing(gamma)
    prec = generation_prec(spec, n_max)
    vals, labels = [], []
    with mp.workprec(prec):
        g = to_mpf(spec.gamma)
        for k in range(1, n_max + 1):
            if k % 2:
                n = (k + 1) // 2
                vals.append(mp.mpc(n * n))
                labels.append((n, 0))
            else:
                n = k // 2
                vals.append(mp.mpc(n * n + mp.exp(-mp.power(n, 2 * g))))
                labels.append((n, 1))
    return EigenvalueSequence(tuple(vals), "by-modulus", spec, prec, tuple(labels))


def condensing_perturbations(gamma, n: int) -> list:
    """``beta_k = exp(-k^(2 gamma))`` for k = 1..n (mpf, no underflow)."""
    with mp.workprec(BASE_PREC):
        g = to_mpf(gamma)
        return [mp.exp(-mp.power(k, 2 * g)) for k in range(1, n + 1)]


def custom_sequence(values, observation=None, sort: bool = True) -> EigenvalueSequence:
    spec = SystemSpec.custom(values, observation)
    with mp.workprec(BASE_PREC):
        vals = [_complex_value(v, f"values[{i}]") for i, v in enumerate(spec.values)]
        idx = list(range(len(vals)))
        if sort:
            idx.sort(key=lambda i: sort_key(vals[i]))
        ordered = tuple(vals[i] for i in idx)
    labels = tuple((i + 1, 0) for i in idx)
    return EigenvalueSequence(ordered, "by-modulus" if sort else "native", spec, BASE_PREC, labels)


def generate(spec: SystemSpec, n_max: int) -> EigenvalueSequence:
    """Eigenvalue sequence of ``spec`` truncated to ``n_max`` terms."""
    if spec.kind == HEAT:
        return heat_sequence(n_max)
    if spec.kind == COMPLEX2X2:
        return complex2x2_sequence(n_max)
    if spec.kind == PHASE_FIELD:
        # the n_max smallest values all come from the first n_max spatial modes
        return phase_field_sequence(spec.xi, spec.rho, spec.tau, n_max).head(n_max)
    if spec.kind == CONDENSING:
        return condensing_sequence(spec.gamma, n_max)
    seq = custom_sequence(spec.values, spec.observation)
    _check_n(n_max)
    if n_max > seq.n_max:
        raise InvalidSpec(f"n_max={n_max} exceeds the {seq.n_max} supplied values", field="n_max")
    return seq.head(n_max)


def _check_n(n_max):
    if not isinstance(n_max, (int, np.integer)) or isinstance(n_max, bool) or n_max < 1:
        raise InvalidSpec(f"n_max must be a positive integer, got {n_max!r}", field="n_max")


# ----------------------------------------------------------------------
# 2x2 spatial-mode eigenstructure
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ModalEigenpair:
    """Eigenpairs of ``k^2 D^T + A^T`` on the k-th sine mode.

    ``values`` are sorted by (real, imaginary) part; ``vectors[i]`` has unit
    Euclidean norm with its first non-negligible component real positive, so
    conjugate eigenvalues get conjugate vectors.
    """

    k: int
    values: tuple
    vectors: tuple
    residuals: tuple = field(default=())


def mode_matrices(spec: SystemSpec):
    """Diffusion and coupling matrices ``(D, A)`` as nested mpf lists."""
    if spec.kind == COMPLEX2X2:
        return [[mp.one, mp.zero], [mp.zero, mp.one]], [[mp.zero, mp.one], [-mp.one, mp.zero]]
    if spec.kind == PHASE_FIELD:
        xi, rho, tau = to_mpf(spec.xi), to_mpf(spec.rho), to_mpf(spec.tau)
        D = [[xi, -rho * xi / 2], [mp.zero, xi]]
        A = [[rho / tau, -rho / (2 * tau)], [-2 / tau, 1 / tau]]
        return D, A
    raise InvalidSpec(f"{spec.kind} has no 2x2 mode matrix", field="kind")


def adjoint_mode_matrix(spec: SystemSpec, k: int):
    D, A = mode_matrices(spec)
    return mp.matrix([[k * k * D[j][i] + A[j][i] for j in range(2)] for i in range(2)])


def modal_eigenpairs(spec: SystemSpec, k: int, prec: int = BASE_PREC,
                     tol: float = 1e-12) -> ModalEigenpair:
    if spec.kind not in (COMPLEX2X2, PHASE_FIELD):
        raise InvalidSpec(f"modal_eigenpairs needs a 2x2 system, got {spec.kind}", field="kind")
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidSpec(f"mode index must be a positive integer, got {k!r}", field="k")
    with mp.workprec(prec):
        M = adjoint_mode_matrix(spec, int(k))
        E, ER = mp.eig(M)
        scale = max(mp.one, abs(E[0]), abs(E[1]))
        if abs(E[0] - E[1]) <= 1e-10 * scale:
            raise DefectiveMode(f"mode {k}: repeated eigenvalue {mp.nstr(E[0], 12)}")
        pairs = []
        for j in range(2):
            v = [ER[0, j], ER[1, j]]
            nrm = mp.sqrt(abs(v[0]) ** 2 + abs(v[1]) ** 2)
            v = [x / nrm for x in v]
            lead = v[0] if abs(v[0]) > mp.mpf("1e-8") else v[1]
            phase = abs(lead) / lead
            v = [mp.mpc(x * phase) for x in v]
            pairs.append((mp.mpc(E[j]), tuple(v)))
        pairs.sort(key=lambda p: (p[0].real, p[0].imag))
        # near-parallel eigenvectors mean a (numerically) defective matrix
        (_, v0), (_, v1) = pairs
        if abs(v0[0] * v1[1] - v0[1] * v1[0]) <= 1e-10:
            raise DefectiveMode(f"mode {k}: eigenvectors are parallel")
        residuals = []
        for lam, v in pairs:
            r0 = M[0, 0] * v[0] + M[0, 1] * v[1] - lam * v[0]
            r1 = M[1, 0] * v[0] + M[1, 1] * v[1] - lam * v[1]
            res = mp.sqrt(abs(r0) ** 2 + abs(r1) ** 2)
            if res > tol:
                raise DefectiveMode(f"mode {k}: eigen-residual {mp.nstr(res, 5)} above {tol}")
            residuals.append(float(res))
    return ModalEigenpair(int(k), tuple(p[0] for p in pairs), tuple(p[1] for p in pairs), tuple(residuals))
