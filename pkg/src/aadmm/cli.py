"""Command-line front end.

Exit codes: 0 success, 2 no certificate, 1 runtime error, 64 usage error.
Options may also come from a JSON file given with ``--config``; flags on
the command line take precedence.  ``AADMM_WORKERS`` sets the default pool
size for sweeps and grid searches.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .certify import BisectionOptions, CertificationError, min_rate
from .lure import AlgorithmParams, ProblemClass

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_CERT = 2
EXIT_USAGE = 64

log = logging.getLogger("aadmm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# defaults live here so that the config file can fill gaps left by the flags
DEFAULTS: Dict[str, object] = {
    "scheme": "nm",
    "kappa": 1.0,
    "n_ozf": 6,
    "backend": None,
    "tol": 2.0 ** -10,
    "kappa_min": 1.0,
    "kappa_max": 1000.0,
    "points": 20,
    "grid": 20,
    "with_alpha": False,
    "prune": True,
    "seed": 0,
    "seeds": 1,
    "schemes": "all",
    "iters": 500,
    "tau": 0.01,
    "n": 250,
    "p": 100,
    "nnz": 50,
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON file with option values")
    p.add_argument("--n-ozf", dest="n_ozf", type=int, default=None)
    p.add_argument("--backend", default=None, help="SDP backend (ipm or clarabel)")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", type=Path, default=None, help="output file or directory")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_overrides(p: argparse.ArgumentParser):
    for name in ("nu1", "nu2", "alpha", "d"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--scheme", default=None)
    p.add_argument("--tol", type=float, default=None, help="bisection tolerance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="aadmm", description="Certified rates and benchmarks for A-ADMM.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("certify", help="smallest certified rate for one configuration")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--kappa", type=float, default=None)

    p = sub.add_parser("sweep", help="certified rate of a scheme over condition numbers")
    _add_common(p)
    _add_overrides(p)
    p.add_argument("--kappa-min", dest="kappa_min", type=float, default=None)
    p.add_argument("--kappa-max", dest="kappa_max", type=float, default=None)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--kappas", type=str, default=None, help="comma-separated explicit list")

    p = sub.add_parser("gridsearch", help="grid search around the TM parameters")
    _add_common(p)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--grid", type=int, default=None, help="points per axis")
    p.add_argument("--with-alpha", dest="with_alpha", action="store_true", default=None)
    p.add_argument("--no-prune", dest="prune", action="store_false", default=None)
    p.add_argument("--d", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)

    p = sub.add_parser("lasso", help="LASSO benchmark traces")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--seeds", type=int, default=None, help="number of consecutive seeds")
    p.add_argument("--schemes", default=None, help="'all' or a comma-separated list")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--nnz", type=int, default=None)

    p = sub.add_parser("selftest", help="check fresh certificates against quadratic oracles")
    _add_common(p)
    p.add_argument("--seed", type=int, default=None)
    return parser


def resolve_config(ns: argparse.Namespace) -> Dict:
    """Merge flags over the config file over the built-in defaults."""
    cfg = dict(DEFAULTS)
    if ns.n_ozf is None and ns.command == "selftest":
        cfg["n_ozf"] = 2
    if getattr(ns, "config", None) is not None:
        try:
            loaded = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    for k, v in vars(ns).items():
        if v is not None and k != "config":
            cfg[k] = v
    cfg.setdefault("workers", None)
    if cfg.get("out") is not None:
        cfg["out"] = Path(cfg["out"])
    return cfg


def _problem(kappa) -> ProblemClass:
    kappa = float(kappa)
    if not kappa >= 1:
        raise UsageError(f"kappa must be >= 1, got {kappa}")
    return ProblemClass.from_kappa(kappa)


def _params(cfg: Dict, pc: ProblemClass) -> AlgorithmParams:
    from .tuning import get_preset

    try:
        base = get_preset(cfg["scheme"])(pc)
        over = {k: float(cfg[k]) for k in ("nu1", "nu2", "alpha", "d") if cfg.get(k) is not None}
        return replace(base, **over)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _opts(cfg: Dict) -> BisectionOptions:
    tol = float(cfg["tol"])
    if not 0 < tol < 0.5:
        raise UsageError("tol must lie in (0, 0.5)")
    return BisectionOptions(tol=tol, backend=cfg.get("backend"))


def _n_ozf(cfg) -> int:
    n = int(cfg["n_ozf"])
    if n < 0:
        raise UsageError("n-ozf must be nonnegative")
    return n


def _emit(text: str, out: Optional[Path]):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def cmd_certify(cfg: Dict) -> int:
    pc = _problem(cfg["kappa"])
    params = _params(cfg, pc)
    cert = min_rate(params, pc, _n_ozf(cfg), _opts(cfg))
    if cert is None:
        print("no certificate", file=sys.stderr)
        return EXIT_NO_CERT
    _emit(cert.to_json(), cfg.get("out"))
    return EXIT_OK


def _kappa_list(cfg) -> List[float]:
    from .tuning import default_kappas

    if cfg.get("kappas") is not None:
        raw = cfg["kappas"]
        items = raw.split(",") if isinstance(raw, str) else list(raw)
        try:
            ks = [float(k) for k in items if str(k).strip()]
        except ValueError:
            raise UsageError(f"bad kappa list {raw!r}") from None
    else:
        n = int(cfg["points"])
        if n < 1:
            raise UsageError("points must be >= 1")
        ks = list(default_kappas(n, float(cfg["kappa_max"]), float(cfg["kappa_min"])))
    if not ks:
        raise UsageError("empty kappa list")
    if any(k < 1 for k in ks):
        raise UsageError("kappa values must be >= 1")
    return sorted(ks)


def cmd_sweep(cfg: Dict) -> int:
    from .tuning import get_preset, sweep_kappa

    ks = _kappa_list(cfg)
    _params(cfg, ProblemClass.from_kappa(ks[0]))
    preset = get_preset(cfg["scheme"])
    over = {k: float(cfg[k]) for k in ("nu1", "nu2", "alpha", "d") if cfg.get(k) is not None}
    if over:
        base = preset.make
        preset = replace(preset, make=lambda pc: replace(base(pc), **over), d=None)
    curve = sweep_kappa(preset, ks, _n_ozf(cfg), _opts(cfg), cfg.get("workers"))
    _emit(curve.to_csv(), cfg.get("out"))
    return EXIT_OK


def cmd_gridsearch(cfg: Dict) -> int:
    from .tuning import GridSpec, grid_search

    pc = _problem(cfg["kappa"])
    n = int(cfg["grid"])
    if n < 1:
        raise UsageError("grid must be >= 1")
    d = float(cfg.get("d") or 1.0)
    spec = GridSpec(n=n, with_alpha=bool(cfg["with_alpha"]), d=d)
    res = grid_search(pc, spec, _n_ozf(cfg), _opts(cfg), cfg.get("workers"), bool(cfg["prune"]))
    out = cfg.get("out")
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "grid.csv").write_text(res.to_csv())
    if res.certificate is None:
        print("no certificate", file=sys.stderr)
        return EXIT_NO_CERT
    best = json.loads(res.certificate.to_json())
    if out is None:
        _emit(json.dumps(best, indent=2), None)
    else:
        (out / "best.json").write_text(json.dumps(best, indent=2))
    return EXIT_OK


def cmd_lasso(cfg: Dict) -> int:
    from .lasso import SCHEMES, DivergenceError, lasso_generate, reference_solution, run_scheme

    schemes = cfg["schemes"]
    schemes = SCHEMES if schemes == "all" else [s.strip() for s in str(schemes).split(",") if s.strip()]
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise UsageError(f"unknown schemes {bad}; choose from {SCHEMES}")
    K = int(cfg["iters"])
    if K < 1:
        raise UsageError("iters must be >= 1")
    if float(cfg["tau"]) < 0:
        raise UsageError("tau must be nonnegative")
    out = Path(cfg.get("out") or "lasso_out")
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    seed0 = int(cfg["seed"])
    for seed in range(seed0, seed0 + int(cfg["seeds"])):
        try:
            inst = lasso_generate(seed, int(cfg["n"]), int(cfg["p"]), int(cfg["nnz"]),
                                  tau=float(cfg["tau"]))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        ref = reference_solution(inst)
        for s in schemes:
            try:
                tr = run_scheme(inst, s, K, ref)
            except DivergenceError as exc:
                log.warning("%s", exc)
                summary.append({"seed": seed, "scheme": s, "iters_to_1e-6": "", "final_delta": "nan"})
                continue
            (out / f"trace_{s}_seed{seed}.csv").write_text(tr.to_csv())
            hit = tr.iterations_to(1e-6)
            summary.append({"seed": seed, "scheme": s, "iters_to_1e-6": "" if hit is None else hit,
                            "final_delta": repr(float(tr.deltas[-1]))})
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["seed", "scheme", "iters_to_1e-6", "final_delta"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(summary)
    for s in schemes:
        hits = [r["iters_to_1e-6"] for r in summary if r["scheme"] == s]
        vals = [h if h != "" else np.inf for h in hits]
        print(f"{s:18s} median iterations to 1e-6: {np.median(vals)}")
    return EXIT_OK


def cmd_selftest(cfg: Dict) -> int:
    from .soundness import selftest

    reports = selftest(int(cfg["seed"]), _n_ozf(cfg))
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_ERROR


COMMANDS = {
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "gridsearch": cmd_gridsearch,
    "lasso": cmd_lasso,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(ns)
        return COMMANDS[ns.command](cfg)
    except UsageError as exc:
        print(f"aadmm {ns.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CertificationError, RuntimeError, ValueError, OSError) as exc:
        print(f"aadmm {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
