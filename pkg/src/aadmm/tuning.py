"""Parameter heuristics, grid search and condition-number sweeps.

All formulas take a :class:`~aadmm.lure.ProblemClass` so that they work for
any normalization; sweeps use ``L_hat = 1`` and ``m_hat = 1 / kappa``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .certify import (BisectionOptions, CertificationError, RateCertificate, certify_at,
                      min_rate)
from .lure import AlgorithmParams, ProblemClass

__all__ = [
    "nm_params",
    "tm_params",
    "gs_nu2",
    "gs_nu2_or",
    "gs_params",
    "vanilla_params",
    "SchemePreset",
    "PRESETS",
    "get_preset",
    "GridSpec",
    "GridPoint",
    "GridResult",
    "grid_search",
    "SweepRow",
    "SweepCurve",
    "sweep_kappa",
    "default_kappas",
    "default_workers",
    "CSV_HEADER",
]

CSV_HEADER = ["kappa", "rho", "nu1", "nu2", "alpha", "d", "n_ozf", "kappa_P", "feasible"]

OR_ALPHA = 1.45
DAMPING = 0.1


def nm_params(pc: ProblemClass) -> AlgorithmParams:
    """Nesterov tuning: ``nu1 = 1/L``, ``nu2 = (sqrt(L) - sqrt(m)) / (sqrt(L) + sqrt(m))``."""
    sL, sm = math.sqrt(pc.L_hat), math.sqrt(pc.m_hat)
    return AlgorithmParams(1.0 / pc.L_hat, (sL - sm) / (sL + sm))


def tm_params(pc: ProblemClass, d: float = 1.0) -> AlgorithmParams:
    """Triple-momentum tuning with ``r = 1 - 1/sqrt(kappa)``."""
    r = 1.0 - 1.0 / math.sqrt(pc.kappa)
    return AlgorithmParams((1.0 + r) / pc.L_hat, r * r / (2.0 - r), d=d)


def gs_nu2(kappa: float) -> float:
    """Regression fit of the grid-search momentum, nominal case."""
    return ((kappa + 0.08) / (kappa + 49.9)) ** 0.25 - 0.2


def gs_nu2_or(kappa: float) -> float:
    """Regression fit of the grid-search momentum, over-relaxed case."""
    return 0.66 * kappa / (kappa + 11.97) + 0.06


def gs_params(pc: ProblemClass, over_relaxed: bool = False) -> AlgorithmParams:
    """TM step size with the fitted momentum; ``alpha = 1.45`` when over-relaxed."""
    nu1 = tm_params(pc).nu1
    if over_relaxed:
        return AlgorithmParams(nu1, gs_nu2_or(pc.kappa), OR_ALPHA)
    return AlgorithmParams(nu1, gs_nu2(pc.kappa))


def vanilla_params(pc: ProblemClass, over_relaxed: bool = False) -> AlgorithmParams:
    """Plain ADMM with ``nu1 = 1/L_hat``; optionally over-relaxed."""
    return AlgorithmParams(1.0 / pc.L_hat, 0.0, OR_ALPHA if over_relaxed else 1.0)


@dataclass(frozen=True)
class SchemePreset:
    """Named rule mapping a problem class to algorithm parameters.

    ``d`` overrides the damping of the generated parameters when given.
    """

    name: str
    make: Callable[[ProblemClass], AlgorithmParams]
    d: Optional[float] = None

    def __call__(self, pc: ProblemClass) -> AlgorithmParams:
        p = self.make(pc)
        if self.d is not None:
            p = replace(p, d=self.d)
        return p

    def with_damping(self, d: float) -> "SchemePreset":
        return replace(self, d=d)


def _tm_damped(pc):
    return tm_params(pc, d=DAMPING)


def _gs_or(pc):
    return gs_params(pc, True)


def _or_vanilla(pc):
    return vanilla_params(pc, True)


PRESETS: Dict[str, SchemePreset] = {
    "vanilla": SchemePreset("vanilla", vanilla_params),
    "or-vanilla": SchemePreset("or-vanilla", _or_vanilla),
    "nm": SchemePreset("nm", nm_params),
    "tm": SchemePreset("tm", tm_params),
    "tm-damped": SchemePreset("tm-damped", _tm_damped),
    "gs": SchemePreset("gs", gs_params),
    "gs-or": SchemePreset("gs-or", _gs_or),
}


def get_preset(name: str, d: Optional[float] = None) -> SchemePreset:
    try:
        preset = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(PRESETS)}") from None
    return preset if d is None else preset.with_damping(d)


def default_workers() -> int:
    """Worker count from ``AADMM_WORKERS``, else 1."""
    try:
        return max(1, int(os.environ.get("AADMM_WORKERS", "1")))
    except ValueError:
        return 1


# -- grid search -------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Axes centered on the TM point.

    ``nu1 = TM * 4**((j - c) / (n/2))`` so that the TM value is hit exactly,
    ``nu2 = TM + step * (k - k0)`` with ``k0`` chosen so that the axis starts
    at or above zero, and ``alpha`` on ``{0.2, 0.4, ..., 4.0}`` when enabled.
    With ``n = 1`` every axis collapses to the TM center (``alpha = 1``).
    """

    n: int = 20
    nu2_step: float = 0.05
    with_alpha: bool = False
    n_alpha: int = 20
    d: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.n_alpha < 1:
            raise ValueError("grid sizes must be positive")

    def nu1_axis(self, pc: ProblemClass) -> np.ndarray:
        tm = tm_params(pc).nu1
        if self.n == 1:
            return np.array([tm])
        c = self.n // 2
        return tm * 4.0 ** ((np.arange(self.n) - c) / c)

    def nu2_axis(self, pc: ProblemClass) -> np.ndarray:
        tm = tm_params(pc).nu2
        if self.n == 1:
            return np.array([tm])
        k0 = min(int(math.floor(tm / self.nu2_step + 1e-12)), self.n - 1)
        return tm + self.nu2_step * (np.arange(self.n) - k0)

    def alpha_axis(self) -> np.ndarray:
        if not self.with_alpha or self.n == 1:
            return np.array([1.0])
        return 0.2 * np.arange(1, self.n_alpha + 1)

    def center(self, pc: ProblemClass) -> AlgorithmParams:
        tm = tm_params(pc)
        return AlgorithmParams(tm.nu1, tm.nu2, 1.0, self.d)

    def points(self, pc: ProblemClass) -> List[Tuple[int, int, int, AlgorithmParams]]:
        out = []
        for i, a in enumerate(self.alpha_axis()):
            for j, v1 in enumerate(self.nu1_axis(pc)):
                for k, v2 in enumerate(self.nu2_axis(pc)):
                    out.append((j, k, i, AlgorithmParams(float(v1), float(max(v2, 0.0)),
                                                         float(a), self.d)))
        return out


@dataclass
class GridPoint:
    """Outcome at one grid node; ``rho`` is None when infeasible or failed."""

    index: Tuple[int, int, int]
    params: AlgorithmParams
    rho: Optional[float]
    status: str
    kappa_P: float = float("nan")


@dataclass
class GridResult:
    best_params: Optional[AlgorithmParams]
    certificate: Optional[RateCertificate]
    points: List[GridPoint]
    pc: ProblemClass
    n_ozf: int

    def rho_grid(self) -> np.ndarray:
        """``rho`` as an array indexed ``[alpha, nu1, nu2]``; NaN where unknown."""
        shape = tuple(max(p.index[m] for p in self.points) + 1 for m in (2, 0, 1))
        g = np.full(shape, np.nan)
        for p in self.points:
            if p.rho is not None:
                g[p.index[2], p.index[0], p.index[1]] = p.rho
        return g

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER + ["status"])
        for p in self.points:
            w.writerow(_row(self.pc.kappa, p.rho, p.params, self.n_ozf, p.kappa_P) + [p.status])
        return buf.getvalue()


def _row(kappa, rho, params, n_ozf, kappa_P):
    feasible = rho is not None
    return [repr(float(kappa)), repr(float(rho)) if feasible else "", repr(params.nu1),
            repr(params.nu2), repr(params.alpha), repr(params.d), str(n_ozf),
            repr(float(kappa_P)) if feasible else "", "1" if feasible else "0"]


def _evaluate(args):
    """Worker: full bisection, or a single screening solve at ``threshold``."""
    params, pc, n_ozf, opts, threshold = args
    try:
        if threshold is not None:
            res = certify_at(params, pc, threshold, n_ozf, opts.backend, opts.delta)
            if res.status == "numerical-failure":
                return None, "failed", float("nan")
            if not res.feasible:
                # feasibility is monotone in rho, so bisection would land above
                return None, "pruned", float("nan")
        cert = min_rate(params, pc, n_ozf, opts)
    except CertificationError:
        return None, "failed", float("nan")
    if cert is None:
        return None, "infeasible", float("nan")
    return cert.rho, "feasible", cert.kappa_P


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def grid_search(pc: ProblemClass, spec: Optional[GridSpec] = None, n_ozf: int = 6,
                opts: Optional[BisectionOptions] = None, workers: Optional[int] = None,
                prune: bool = True) -> GridResult:
    """Best certified rate over a grid around the TM parameters.

    Parameters
    ----------
    pc : ProblemClass
    spec : GridSpec, optional
    n_ozf : int
    opts : BisectionOptions, optional
        Per-point bisection settings; kappa refinement is only run for the
        winner.
    workers : int, optional
        Process pool size; defaults to ``AADMM_WORKERS``.
    prune : bool
        Screen each point with one feasibility solve at the incumbent rate
        before bisecting.  Points infeasible there cannot win and are recorded
        with status ``"pruned"`` and no rate.

    Returns
    -------
    GridResult
        Winner chosen by smallest rate; ties are re-bisected at a finer
        tolerance, then broken toward smaller ``nu2``, smaller ``alpha`` and
        finally the point closest to the center.
    """
    spec = spec or GridSpec()
    opts = opts or BisectionOptions()
    workers = workers or default_workers()
    point_opts = replace(opts, refine_kappa=False)
    nodes = spec.points(pc)
    center = spec.center(pc)
    # evaluate the TM center first so pruning starts from a good incumbent
    order = sorted(range(len(nodes)), key=lambda q: nodes[q][3] != center)
    results: Dict[int, GridPoint] = {}
    best = None
    batch = max(1, workers * 4) if prune else len(nodes)
    for start in range(0, len(order), batch):
        chunk = order[start:start + batch]
        jobs = [(nodes[q][3], pc, n_ozf, point_opts, best if prune else None) for q in chunk]
        for q, (rho, status, kP) in zip(chunk, _map(_evaluate, jobs, workers)):
            j, k, i, params = nodes[q]
            results[q] = GridPoint((j, k, i), params, rho, status, kP)
            if rho is not None and (best is None or rho < best):
                best = rho
    points = [results[q] for q in range(len(nodes))]
    feas = [p for p in points if p.rho is not None]
    if not feas:
        return GridResult(None, None, points, pc, n_ozf)

    rho_min = min(p.rho for p in feas)
    tied = [p for p in feas if p.rho <= rho_min]
    key_rho = {id(p): p.rho for p in tied}
    if len(tied) > 1:
        fine = replace(point_opts, tol=opts.tol / 64, rho_lo=max(opts.rho_lo, rho_min - opts.tol),
                       rho_hi=rho_min, check_monotone=False)
        for p in tied:
            try:
                c = min_rate(p.params, pc, n_ozf, fine)
            except CertificationError:
                c = None
            key_rho[id(p)] = c.rho if c is not None else rho_min
    c1 = (len(spec.nu1_axis(pc)) // 2 if spec.n > 1 else 0)
    k0 = int(np.argmin(np.abs(spec.nu2_axis(pc) - tm_params(pc).nu2)))

    def tie_key(p):
        j, k, _ = p.index
        return (key_rho[id(p)], p.params.nu2, p.params.alpha, abs(j - c1) + abs(k - k0))

    winner = min(tied, key=tie_key)
    cert = min_rate(winner.params, pc, n_ozf, opts)
    return GridResult(winner.params, cert, points, pc, n_ozf)


# -- sweeps ------------------------------------------------------------------


def default_kappas(n: int = 20, kappa_max: float = 1000.0, kappa_min: float = 1.0) -> np.ndarray:
    """``n`` log-spaced condition numbers between ``kappa_min`` and ``kappa_max``."""
    if n < 1:
        raise ValueError("need at least one kappa")
    if n == 1:
        return np.array([float(kappa_min)])
    return np.logspace(math.log10(kappa_min), math.log10(kappa_max), n)


@dataclass
class SweepRow:
    kappa: float
    rho: Optional[float]
    params: AlgorithmParams
    n_ozf: int
    kappa_P: float = float("nan")
    status: str = "feasible"
    certificate: Optional[RateCertificate] = field(default=None, repr=False)

    @property
    def feasible(self) -> bool:
        return self.rho is not None


@dataclass
class SweepCurve:
    preset: str
    rows: List[SweepRow]

    def __post_init__(self):
        ks = [r.kappa for r in self.rows]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("kappa values must be strictly increasing")

    @property
    def kappas(self) -> np.ndarray:
        return np.array([r.kappa for r in self.rows])

    @property
    def rhos(self) -> np.ndarray:
        return np.array([np.nan if r.rho is None else r.rho for r in self.rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow(_row(r.kappa, r.rho, r.params, r.n_ozf, r.kappa_P))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, preset: str = "") -> "SweepCurve":
        rows = []
        for rec in csv.DictReader(io.StringIO(text)):
            feasible = rec["feasible"] == "1"
            params = AlgorithmParams(float(rec["nu1"]), float(rec["nu2"]), float(rec["alpha"]),
                                     float(rec["d"]))
            rows.append(SweepRow(float(rec["kappa"]), float(rec["rho"]) if feasible else None,
                                 params, int(rec["n_ozf"]),
                                 float(rec["kappa_P"]) if feasible else float("nan"),
                                 "feasible" if feasible else "infeasible"))
        return cls(preset, rows)


def _sweep_point(args):
    params, pc, n_ozf, opts = args
    try:
        cert = min_rate(params, pc, n_ozf, opts)
    except CertificationError:
        return None, "failed"
    return cert, ("feasible" if cert is not None else "infeasible")


def sweep_kappa(preset, kappas: Sequence[float], n_ozf: int = 6,
                opts: Optional[BisectionOptions] = None, workers: Optional[int] = None,
                L_hat: float = 1.0) -> SweepCurve:
    """Certified rate of a preset along a sorted list of condition numbers.

    Infeasible and numerically failed points are kept as rows without a rate.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    kappas = [float(k) for k in kappas]
    if not kappas:
        raise ValueError("empty kappa list")
    if any(k < 1 for k in kappas):
        raise ValueError("kappa values must be >= 1")
    pcs = [ProblemClass.from_kappa(k, L_hat) for k in kappas]
    jobs = [(preset(pc), pc, n_ozf, opts) for pc in pcs]
    out = _map(_sweep_point, jobs, workers or default_workers())
    rows = []
    for k, (params, _, _, _), (cert, status) in zip(kappas, jobs, out):
        if cert is None:
            rows.append(SweepRow(k, None, params, n_ozf, status=status))
        else:
            rows.append(SweepRow(k, cert.rho, params, n_ozf, cert.kappa_P, status, cert))
    return SweepCurve(preset.name, rows)
