"""Command-line front end.

Every subcommand writes one self-describing report to standard output: JSON
by default (inputs echoed, each result carrying its error and method), or CSV
for the tabular commands.  Exit status is 0 on success, 2 for bad arguments or
model files, 3 when a numerical routine fails to converge (the report then
holds whatever was computed before the failure) and 1 for other errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import Any, Sequence

import numpy as np

from . import applications as app
from . import bounds, divergence, oracle
from .density import (
    MixtureModel,
    SeparationCertificate,
    component_from_dict,
    load_model,
    model_from_dict,
    separation_certificate,
)
from .errors import InputError, MixentError, NonConvergenceError
from .numerics import Estimate, McSpec, QuadratureSpec

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_NONCONVERGENCE = 0, 1, 2, 3
LN2 = math.log(2.0)
CHANNEL_COLUMNS = ("parameter", "oracle", "oracle_error", "paper_bound", "fano_bound", "ozwy_bound")


class UsageError(InputError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# argument helpers


def parse_grid(text: str) -> list[float]:
    """'0.1,0.5,0.9' or 'start:stop:count' (inclusive, evenly spaced)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return np.linspace(float(start), float(stop), int(count)).tolist()
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse grid {text!r}") from exc


def _positive_ints(values: list[float], name: str) -> list[int]:
    out = [int(round(v)) for v in values]
    if any(abs(a - b) > 1e-9 for a, b in zip(out, values)) or any(v < 2 for v in out):
        raise UsageError(f"{name} values must be integers >= 2")
    return out


def _spec(args) -> QuadratureSpec | McSpec | None:
    if args.backend == "mc":
        return McSpec(seed=args.seed, samples=args.samples, chunks=args.chunks)
    if args.backend == "quadrature":
        return QuadratureSpec(args.tol, args.tol, args.max_subdivisions)
    return None


def _auto_spec(args, dim: int):
    spec = _spec(args)
    if spec is None:
        if dim > 2:
            return McSpec(seed=args.seed, samples=args.samples, chunks=args.chunks)
        return QuadratureSpec(args.tol, args.tol, args.max_subdivisions)
    return spec


def _load(args) -> MixtureModel:
    if not args.model:
        raise UsageError("--model is required")
    return load_model(args.model)


def _load_pair(args) -> divergence.DensityPair:
    if not args.model:
        raise UsageError("--model is required")
    with open(args.model) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"cannot parse {args.model}: {exc}") from exc
    if isinstance(doc, dict) and "mu" in doc and "nu" in doc:
        dim = int(doc["dim"])

        def one(d):
            if "weights" in d:
                return model_from_dict({"dim": dim, **d})
            return component_from_dict(d, dim)

        return divergence.DensityPair(one(doc["mu"]), one(doc["nu"]))
    model = model_from_dict(doc)
    if model.n < 2:
        raise InputError("divergence needs 'mu'/'nu' entries or a model with at least two components")
    return divergence.DensityPair(model.components[0], model.components[1])


# ---------------------------------------------------------------------------
# report values


class Report:
    """Accumulates results so a failure can still emit what was computed."""

    def __init__(self, command: str, inputs: dict, bits: bool):
        self.command = command
        self.inputs = inputs
        self.bits = bits
        self.results: dict[str, Any] = {}
        self.rows: list[dict] = []

    def scale(self, x):
        if x is None or not self.bits:
            return x
        return x / LN2

    def estimate(self, key: str, est: Estimate):
        d = est.to_dict()
        d["value"], d["error"] = self.scale(est.value), self.scale(est.error)
        self.results[key] = d

    def bound(self, key: str, rep: bounds.BoundReport):
        d = rep.to_dict()
        d["value"], d["error"] = self.scale(rep.value), self.scale(rep.error)
        self.results[key] = d

    def plain(self, key: str, value: float, error: float = 0.0, method: str = "closed-form", **meta):
        self.results[key] = {"value": self.scale(value), "error": self.scale(error), "method": method, **meta}

    def to_json(self, error: dict | None = None) -> str:
        doc = {"command": self.command, "units": "bits" if self.bits else "nats", "inputs": self.inputs,
               "results": self.results}
        if self.rows:
            doc["rows"] = self.rows
        if error:
            doc["error"] = error
        return json.dumps(_jsonable(doc), indent=2) + "\n"

    def to_csv(self, columns: Sequence[str]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in self.rows:
            w.writerow(["" if row.get(c) is None else _fmt(row.get(c)) for c in columns])
        return buf.getvalue()


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else "-inf" if x < 0 else "nan"
    return x


# ---------------------------------------------------------------------------
# subcommands


def cmd_entropy(args, rep: Report):
    model = _load(args)
    rep.estimate("entropy", oracle.mixture_entropy(model, _auto_spec(args, model.dim)))
    rep.plain("weight_entropy", model.weight_entropy(), method="exact")


def _certificate(args, model: MixtureModel) -> SeparationCertificate | None:
    if args.lam is not None:
        tau = args.tau if args.tau is not None else 1.0
        return SeparationCertificate(args.lam, args.M, tau)
    return separation_certificate(model, args.M)


def cmd_deficit(args, rep: Report):
    model = _load(args)
    spec = _auto_spec(args, model.dim)
    rep.estimate("oracle", oracle.concavity_deficit(model, spec))
    rep.bound("upper", bounds.deficit_upper_tv(model, spec))
    cert = _certificate(args, model)
    if cert is not None:
        rep.bound("lower", bounds.deficit_lower(model, cert, spec))
    else:
        rep.plain("lower", 0.0, method="trivial", note="no separation certificate exists")


def cmd_divergence(args, rep: Report):
    pair = _load_pair(args)
    spec = _auto_spec(args, pair.dim)
    rep.estimate("kl", divergence.kl(pair, spec))
    rep.estimate("total_variation", divergence.total_variation(pair, spec))
    rep.estimate("jsd", divergence.jsd(pair, spec))
    for t in parse_grid(args.t):
        s = divergence.skew_divergence(pair, t, spec)
        c = divergence.skew_chi2(pair, t, spec)
        rep.rows.append({"t": t, "skew_divergence": rep.scale(s.value), "skew_divergence_error": rep.scale(s.error),
                         "skew_chi2": c.value, "skew_chi2_error": c.error, "method": s.method})


def cmd_bounds(args, rep: Report):
    model = _load(args)
    spec = _auto_spec(args, model.dim)
    rep.bound("deficit_upper_tv", bounds.deficit_upper_tv(model, spec))
    rep.bound("tv_fano_estimator", app.tv_fano_estimator_bound(model, spec))
    cert = _certificate(args, model)
    if cert is not None:
        rep.bound("deficit_lower", bounds.deficit_lower(model, cert, spec))
    sigmas = {getattr(c, "sigma", None) for c in model.components}
    if cert is not None and len(sigmas) == 1 and None not in sigmas:
        sigma = sigmas.pop()
        rep.bound("gaussian_hx_given_y", app.gaussian_hx_given_y_bound(cert, sigma, model.dim, model))
        if model.dim == 1 and cert.m == 1 and math.isfinite(cert.lam):
            rep.bound("agwn_1d", app.agwn_1d_condentropy_bound(cert.lam, sigma))


def _channel_row(rep: Report, n: int, lam: float, sigma: float, parameter: float, args):
    row = app.channel_comparison(n, lam, sigma, parameter, _auto_spec(args, 1), with_oracle=not args.no_oracle)
    d = row.to_dict()
    rep.rows.append({k: (rep.scale(v) if k != "parameter" else v) for k, v in d.items()})


def cmd_channel(args, rep: Report):
    for n in _positive_ints(parse_grid(args.N), "--N"):
        _channel_row(rep, n, args.lam if args.lam is not None else 0.5, args.sigma, n, args)


def cmd_landauer(args, rep: Report):
    spec = app.EnergeticsSpec(args.a, args.sigma, args.p0, args.p1, args.kbt)
    band = app.landauer_bounds(spec)
    for key in ("center", "lower", "upper", "width"):
        rep.plain(key, getattr(band, key))
    rep.plain("C_L", band.c_lower)
    rep.plain("C_U", band.c_upper)
    rep.results["tail"] = {"value": band.tail, "error": 0.0, "method": "closed-form"}
    if not args.no_oracle:
        rep.estimate("oracle_heat", app.landauer_oracle(spec, QuadratureSpec(args.tol, args.tol, args.max_subdivisions)))


def cmd_sweep(args, rep: Report):
    values = parse_grid(args.values)
    lam = args.lam if args.lam is not None else 0.5
    n_fixed = _positive_ints(parse_grid(args.N), "--N")[0]
    for v in values:
        if args.vary == "N":
            _channel_row(rep, _positive_ints([v], "N")[0], lam, args.sigma, v, args)
        elif args.vary == "lambda":
            _channel_row(rep, n_fixed, v, args.sigma, v, args)
        else:
            _channel_row(rep, n_fixed, lam, v, v, args)


COMMANDS = {
    "entropy": (cmd_entropy, "oracle mixture entropy h(f)"),
    "deficit": (cmd_deficit, "oracle concavity deficit with upper and lower bounds"),
    "divergence": (cmd_divergence, "KL, TV, JSD and the skew family over a t-grid"),
    "bounds": (cmd_bounds, "every applicable bound report for a model"),
    "channel": (cmd_channel, "Fano, Ozarow-Wyner and grid-free bounds for uniform grid inputs"),
    "landauer": (cmd_landauer, "heat band for erasing a bit in a bistable well"),
    "sweep": (cmd_sweep, "channel comparison table over one varied parameter"),
}
TABULAR = {"channel", "sweep"}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--model", help="mixture JSON document")
    common.add_argument("--output", choices=("json", "csv"), default=None)
    common.add_argument("--bits", action="store_true", help="display information quantities in bits")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=200_000)
    common.add_argument("--chunks", type=int, default=1)
    common.add_argument("--backend", choices=("auto", "quadrature", "mc"), default="auto")
    common.add_argument("--tol", type=float, default=1e-10, help="quadrature tolerance")
    common.add_argument("--max-subdivisions", type=int, default=2**20, help="quadrature work limit")
    common.add_argument("--lambda", dest="lam", type=float, default=None)
    common.add_argument("--M", type=int, default=1)
    common.add_argument("--tau", type=float, default=None)
    common.add_argument("--sigma", type=float, default=1.0)
    common.add_argument("--N", default="8", help="integer or grid of integers")
    common.add_argument("--t", default="0.1:0.9:9", help="t grid, 'a,b,c' or 'start:stop:count'")
    common.add_argument("--no-oracle", action="store_true")

    parser = _Parser(prog="mixent", description="Entropy of mixtures: oracles and bounds.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "landauer":
            p.add_argument("--a", type=float, default=1.0)
            p.add_argument("--p0", type=float, default=0.5)
            p.add_argument("--p1", type=float, default=0.0)
            p.add_argument("--kbt", type=float, default=1.0)
        if name == "sweep":
            p.add_argument("--vary", choices=("N", "lambda", "sigma"), required=True)
            p.add_argument("--values", required=True, help="grid of values for the varied parameter")
    return parser


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k != "command"}


def run(argv: Sequence[str] | None = None) -> tuple[int, str]:
    """Execute a command line and return (exit status, report text)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return EXIT_USAGE, json.dumps({"error": {"type": "usage", "message": str(exc)}}, indent=2) + "\n"

    rep = Report(args.command, _echo(args), args.bits)
    output = args.output or ("csv" if args.command in TABULAR else "json")
    status, error = EXIT_OK, None
    try:
        COMMANDS[args.command][0](args, rep)
    except NonConvergenceError as exc:
        status, error = EXIT_NONCONVERGENCE, {"type": "non-convergence", "message": str(exc)}
        if isinstance(getattr(exc, "best", None), Estimate):
            error["best"] = exc.best.to_dict()
    except (InputError, OSError) as exc:
        status, error = EXIT_USAGE, {"type": "input", "message": str(exc)}
    except MixentError as exc:
        status, error = EXIT_FAILURE, {"type": type(exc).__name__, "message": str(exc)}
    if output == "csv" and error is None:
        columns = CHANNEL_COLUMNS if args.command in TABULAR else _row_columns(rep)
        if not rep.rows:
            return EXIT_USAGE, json.dumps({"error": {"type": "usage", "message": "no tabular output for this command"}}) + "\n"
        return status, rep.to_csv(columns)
    return status, rep.to_json(error)


def _row_columns(rep: Report) -> list[str]:
    return list(rep.rows[0]) if rep.rows else []


def main(argv: Sequence[str] | None = None) -> int:
    status, text = run(argv)
    sys.stdout.write(text)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
