"""JSON scenario files: parsing, validation, overrides and provenance hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

from .cost import SAMPLE_SETS, default_T_grid
from .errors import InvalidSpec
from .spectra import SystemSpec

DEFAULTS = {
    "n": 25,
    "q": None,
    "precision_bits": 512,
    "T": 1.0,
    "y0": [1],
    "y0_vectors": None,
    "n_check": None,
    "hypotheses": {"n_terms": None},
    "sweep": {"T_grid": None, "lo": 0.04, "hi": 0.8, "points": 12, "n": None, "jobs": 1},
    "fit": {"models": ["A"], "samples": "auto"},
    "control_samples": 101,
    "out": "out",
}

TOP_LEVEL = set(DEFAULTS) | {"name", "system", "description"}


@dataclass
class Scenario:
    name: str
    system: SystemSpec
    raw: dict = field(repr=False)

    def __getattr__(self, item):
        raw = self.__dict__.get("raw", {})
        if item in raw:
            return raw[item]
        raise AttributeError(item)

    @property
    def q(self) -> int:
        q = self.raw.get("q")
        return self.system.default_q if q is None else q

    @property
    def n_check(self) -> int:
        nc = self.raw.get("n_check")
        return 2 * self.n if nc is None else nc

    @property
    def hypothesis_terms(self) -> int:
        n = self.raw["hypotheses"].get("n_terms")
        return max(self.n, 2 * self.q + 2) if n is None else n

    @property
    def sweep_n(self) -> int:
        n = self.raw["sweep"].get("n")
        return self.n if n is None else n

    @property
    def T_grid(self) -> list:
        sw = self.raw["sweep"]
        if sw.get("T_grid") is not None:
            return [float(t) for t in sw["T_grid"]]
        return default_T_grid(sw["points"], sw["lo"], sw["hi"])

    def canonical(self) -> str:
        """Canonical JSON of every field that can change a numeric result."""
        doc = copy.deepcopy(self.raw)
        doc.pop("out", None)
        doc["sweep"].pop("jobs", None)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _merge(base: dict, doc: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in doc.items():
        if isinstance(out.get(k), dict) and isinstance(v, dict):
            out[k] = {**out[k], **v}
        else:
            out[k] = v
    return out


def _positive_int(doc, key, path=None, minimum=1):
    v = doc.get(key)
    name = path or key
    if v is None:
        return
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise InvalidSpec(f"{name} must be an integer >= {minimum}, got {v!r}", field=name)


def _positive_number(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise InvalidSpec(f"{name} must be a positive number, got {v!r}", field=name)


def validate(doc: dict) -> dict:
    if not isinstance(doc, dict):
        raise InvalidSpec("scenario must be a JSON object", field="scenario")
    unknown = set(doc) - TOP_LEVEL
    if unknown:
        raise InvalidSpec(f"unknown scenario field(s) {sorted(unknown)}", field=sorted(unknown)[0])
    if "system" not in doc:
        raise InvalidSpec("scenario needs a 'system' block", field="system")
    raw = _merge(DEFAULTS, doc)
    for key in ("n", "n_check", "control_samples"):
        _positive_int(raw, key)
    _positive_int(raw, "q")
    _positive_int(raw, "precision_bits", minimum=53)
    _positive_number(raw["T"], "T")
    _positive_int(raw["hypotheses"], "n_terms", "hypotheses.n_terms", minimum=4)
    sw = raw["sweep"]
    _positive_int(sw, "n", "sweep.n")
    _positive_int(sw, "points", "sweep.points")
    _positive_int(sw, "jobs", "sweep.jobs")
    if sw.get("T_grid") is not None:
        if not isinstance(sw["T_grid"], list):
            raise InvalidSpec("sweep.T_grid must be a list", field="sweep.T_grid")
        for t in sw["T_grid"]:
            _positive_number(t, "sweep.T_grid")
    else:
        _positive_number(sw["lo"], "sweep.lo")
        _positive_number(sw["hi"], "sweep.hi")
        if not sw["lo"] < sw["hi"]:
            raise InvalidSpec("sweep.lo must be below sweep.hi", field="sweep.lo")
    fit = raw["fit"]
    models = fit.get("models")
    if not isinstance(models, list) or not models or any(m not in ("A", "B") for m in models):
        raise InvalidSpec(f"fit.models must be a non-empty list drawn from A, B; got {models!r}",
                          field="fit.models")
    if fit.get("samples") not in SAMPLE_SETS:
        raise InvalidSpec(f"fit.samples must be one of {SAMPLE_SETS}", field="fit.samples")
    if not isinstance(raw["y0"], list):
        raise InvalidSpec("y0 must be a list of modal coefficients", field="y0")
    if raw["y0_vectors"] is not None:
        vecs = raw["y0_vectors"]
        if not isinstance(vecs, list) or any(not isinstance(v, list) or len(v) != 2 for v in vecs):
            raise InvalidSpec("y0_vectors must be a list of 2-vectors", field="y0_vectors")
    if not isinstance(raw["out"], str) or not raw["out"]:
        raise InvalidSpec("out must be a directory path", field="out")
    return raw


def from_dict(doc: dict, overrides: dict | None = None) -> Scenario:
    raw = validate(_merge(doc, overrides or {}))
    system = SystemSpec.from_dict(raw["system"])
    raw["system"] = system.to_dict()
    name = raw.get("name") or system.kind
    return Scenario(name, system, raw)


def load(path, overrides: dict | None = None) -> Scenario:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"scenario is not valid JSON: {exc}", field="scenario") from exc
    except OSError as exc:
        raise InvalidSpec(f"cannot read scenario: {exc}", field="scenario") from exc
    return from_dict(doc, overrides)
