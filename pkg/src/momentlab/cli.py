"""Batch front end: ``momentlab <command> --scenario file.json [--out dir] ...``.

Exit status: 0 success, 2 validation error, 3 numerical failure, 4 hypothesis
failure under ``--strict``. Errors are also written to stderr as one JSON
object per line.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import mpmath
import numpy as np

from . import __version__
from . import scenario as scenario_mod
from .biorthogonal import biorthogonal_family, dump_bundle, norm_bound_report, verify_biorthogonality
from .control import (
    dump_control_bundle, modal_coefficients, moments_from_initial_data, synthesize_control,
    verify_null_control,
)
from .cost import CostCurve, CostSample, cost_sweep, dump_fit, fit_scaling, gnuplot_script
from .errors import (
    CoincidentEigenvalues, DefectiveMode, InvalidSpec, MomentLabError, PrecisionTooLow, ResidualTooLarge,
    ZeroPerturbation,
)
from .hypotheses import check_hypotheses
from .spectra import COMPLEX2X2, CONDENSING, PHASE_FIELD, generate

COMMANDS = ("eigs", "check", "biorthogonal", "synthesize", "verify", "cost-sweep", "fit", "pipeline")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_HYPOTHESIS = 0, 2, 3, 4

# items needed by the gap-free biorthogonal estimate; the window gap (6) is
# exactly what the product correction of condensing sequences replaces
GATE_ITEMS = ("distinct", "positive_real_part", "imag_bound", "modulus_monotone", "weak_gap", "counting")


class HypothesisGateFailure(Exception):
    def __init__(self, failed):
        super().__init__(f"hypotheses failed: {', '.join(failed)}")
        self.failed = failed


def versions() -> dict:
    return {"momentlab": __version__, "mpmath": mpmath.__version__, "numpy": np.__version__}


class ArtifactWriter:
    """Writes CSV/JSON/text artifacts stamped with the scenario hash and versions."""

    def __init__(self, sc, out_dir):
        self.sc = sc
        self.out = out_dir
        self.files = []
        os.makedirs(out_dir, exist_ok=True)

    @property
    def stamp(self) -> str:
        v = " ".join(f"{k}={x}" for k, x in versions().items())
        return f"scenario={self.sc.name} sha256={self.sc.sha256()} {v}"

    def meta(self, artifact) -> dict:
        return {"artifact": artifact, "scenario": self.sc.name,
                "scenario_sha256": self.sc.sha256(), "versions": versions()}

    def path(self, name) -> str:
        p = os.path.join(self.out, name)
        if p not in self.files:
            self.files.append(p)
        return p

    def json(self, name, payload):
        with open(self.path(name), "w") as fh:
            json.dump({"meta": self.meta(name), **payload}, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def text(self, name, body):
        with open(self.path(name), "w") as fh:
            fh.write(f"# {self.stamp}\n")
            fh.write(body)

    def manifest(self, command):
        entries = []
        for p in self.files:
            with open(p, "rb") as fh:
                entries.append({"file": os.path.basename(p), "sha256": hashlib.sha256(fh.read()).hexdigest()})
        doc = {
            "command": command,
            "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "scenario": self.sc.raw,
            "scenario_sha256": self.sc.sha256(),
            "versions": versions(),
            "files": entries,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def run_eigs(sc, w, args):
    seq = generate(sc.system, sc.n)
    seq.to_csv(w.path("eigenvalues.csv"), header_comment=w.stamp)
    print(f"eigs: {seq.n_max} eigenvalues of {sc.system.kind} -> eigenvalues.csv")
    return seq


def run_check(sc, w, args, gate=False):
    seq = generate(sc.system, sc.hypothesis_terms)
    rep = check_hypotheses(seq, sc.q)
    w.json("hypotheses.json", {"report": rep.to_dict(), "all_passed": rep.all_passed})
    print(rep.table())
    if args.strict:
        names = [v.name for v in rep.verdicts] if not gate else GATE_ITEMS
        failed = [n for n in names if not rep.verdict(n).passed]
        if failed:
            raise HypothesisGateFailure(failed)
    return rep


def run_biorthogonal(sc, w, args):
    seq = generate(sc.system, sc.n)
    fam = biorthogonal_family(seq, sc.T, prec=sc.precision_bits)
    defect = verify_biorthogonality(fam)
    fam.to_csv(w.path("biorthogonal.csv"), header_comment=w.stamp)
    payload = {"defect": defect, "prec": fam.prec, "N": fam.N, "T": fam.T}
    if seq.n_max >= 2 * sc.q + 2:
        nb = norm_bound_report(fam, sc.q)
        payload["norm_bound"] = {"C": nb.C, "envelope": nb.envelope, "q": nb.q}
    w.json("biorthogonal.json", payload)
    dump_bundle(fam, w.path("biorthogonal_bundle.json"), w.meta("biorthogonal_bundle.json"))
    print(f"biorthogonal: N={fam.N} T={fam.T:g} prec={fam.prec} defect={defect:.3e}")
    return fam


def _initial_data(sc, seq):
    if sc.y0_vectors is not None:
        if sc.system.kind not in (COMPLEX2X2, PHASE_FIELD):
            raise InvalidSpec("y0_vectors needs a 2x2 system", field="y0_vectors")
        return modal_coefficients(sc.system, seq, sc.y0_vectors)
    return sc.y0


def run_synthesize(sc, w, args):
    seq = generate(sc.system, max(sc.n, sc.n_check))
    fam = biorthogonal_family(seq.head(sc.n), sc.T, prec=sc.precision_bits)
    prob = moments_from_initial_data(sc.system, _initial_data(sc, seq.head(sc.n)), sc.T, N=sc.n, seq=seq)
    v = synthesize_control(fam, prob)
    v.to_csv(w.path("control.csv"), n=sc.control_samples, header_comment=w.stamp)
    dump_control_bundle(v, w.path("control.json"), {**w.meta("control.json"), **prob.metadata,
                                                     "real_data": prob.real_data})
    print(f"synthesize: N={prob.N} T={prob.T:g} ||v||={float(v.norm):.6e}")
    return seq, prob, v


def run_verify(sc, w, args):
    seq, prob, v = run_synthesize(sc, w, args)
    rep = verify_null_control(sc.system, prob, v, n_check=sc.n_check, seq=seq)
    rep.to_csv(w.path("null_control.csv"), header_comment=w.stamp)
    y0n = rep.y0_norm or 1.0
    w.json("verify.json", {
        "N": rep.N, "n_check": len(rep.residuals), "y0_norm": rep.y0_norm, "control_norm": rep.control_norm,
        "max_controlled": rep.max_controlled, "max_controlled_relative": rep.max_controlled / y0n,
        "max_spillover": max(rep.spillover) if rep.spillover else None,
        "spillover_envelope_holds": rep.envelope_holds, "spillover_envelope_decreasing": rep.envelope_decreasing,
    })
    print(f"verify: max controlled |y_k(T)|/||y0|| = {rep.max_controlled / y0n:.3e}; "
          f"spillover modes {rep.N + 1}..{len(rep.residuals)} reported")
    return rep


def run_cost_sweep(sc, w, args):
    curve = cost_sweep(sc.system, sc.T_grid, sc.sweep_n, prec=sc.precision_bits, jobs=sc.sweep["jobs"])
    curve.to_csv(w.path("cost.csv"), header_comment=w.stamp)
    w.json("cost.json", {"curve": curve.to_dict(), "N": sc.sweep_n})
    bad = [s for s in curve.samples if s.error]
    print(f"cost-sweep: {len(curve.samples)} horizons, {len(curve.converged())} converged, {len(bad)} failed")
    return curve


def _load_curve(w):
    path = os.path.join(w.out, "cost.json")
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("meta", {}).get("scenario_sha256") != w.sc.sha256():
        return None
    return CostCurve([CostSample(**s) for s in doc["curve"]["samples"]], doc["curve"]["system"])


def run_fit(sc, w, args, curve=None):
    curve = curve or _load_curve(w) or run_cost_sweep(sc, w, args)
    gamma = float(sc.system.gamma) if sc.system.kind == CONDENSING else None
    fits = []
    for model in sc.fit["models"]:
        fit = fit_scaling(curve, model, gamma=gamma, samples=sc.fit["samples"])
        dump_fit(fit, w.path(f"fit_{model}.json"), w.meta(f"fit_{model}.json"))
        fits.append(fit)
        extra = f" c={fit.c:.6g}" if fit.c is not None else ""
        print(f"fit: model {model} a={fit.a:.6g} b={fit.b:.6g}{extra} R2={fit.r2:.5f} ({fit.sample_set} samples)")
    w.text("cost.gp", gnuplot_script(curve, fits, "cost.csv", f"control cost, {sc.name}"))
    return fits


def run_pipeline(sc, w, args):
    run_eigs(sc, w, args)
    run_check(sc, w, args, gate=True)
    run_biorthogonal(sc, w, args)
    run_verify(sc, w, args)
    curve = run_cost_sweep(sc, w, args)
    run_fit(sc, w, args, curve)


RUNNERS = {
    "eigs": run_eigs,
    "check": run_check,
    "biorthogonal": run_biorthogonal,
    "synthesize": run_synthesize,
    "verify": run_verify,
    "cost-sweep": run_cost_sweep,
    "fit": run_fit,
    "pipeline": run_pipeline,
}


def _strict_gate(sc, w, args):
    """Under ``--strict`` cost commands first run the hypothesis check."""
    if args.strict and args.command in ("cost-sweep", "fit"):
        run_check(sc, w, args, gate=True)


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="momentlab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", help="output directory (overrides the scenario)")
    p.add_argument("--precision-bits", type=int, help="starting working precision in bits")
    p.add_argument("--strict", action="store_true", help="refuse to continue when hypotheses fail (exit 4)")
    p.add_argument("--n", type=int, help="number of modes N")
    p.add_argument("--q", type=int, help="gap window q")
    p.add_argument("--jobs", type=int, help="parallel workers for the cost sweep")
    p.add_argument("--version", action="version", version=f"momentlab {__version__}")
    return p


def _overrides(args) -> dict:
    out = {}
    if args.out is not None:
        out["out"] = args.out
    if args.precision_bits is not None:
        out["precision_bits"] = args.precision_bits
    if args.n is not None:
        out["n"] = args.n
    if args.q is not None:
        out["q"] = args.q
    if args.jobs is not None:
        out["sweep"] = {"jobs": args.jobs}
    return out


def _emit_error(kind, message, code, **extra):
    doc = {"error": kind, "message": message, "exit_code": code, **extra}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def exit_code_for(exc) -> int:
    if isinstance(exc, (PrecisionTooLow, ResidualTooLarge, DefectiveMode)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValueError, CoincidentEigenvalues, ZeroPerturbation)):
        return EXIT_VALIDATION
    if isinstance(exc, MomentLabError):
        return EXIT_NUMERICAL
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = scenario_mod.load(args.scenario, _overrides(args))
        w = ArtifactWriter(sc, sc.out)
        _strict_gate(sc, w, args)
        RUNNERS[args.command](sc, w, args)
        w.manifest(args.command)
    except HypothesisGateFailure as exc:
        return _emit_error("HypothesisFailure", str(exc), EXIT_HYPOTHESIS, failed=exc.failed)
    except (MomentLabError, ValueError) as exc:
        code = exit_code_for(exc)
        extra = {}
        for attr in ("field", "prec", "pairs"):
            val = getattr(exc, attr, None)
            if val is not None:
                extra[attr] = val
        return _emit_error(type(exc).__name__, str(exc), code, **extra)
    except OSError as exc:
        return _emit_error(type(exc).__name__, str(exc), EXIT_VALIDATION)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
