"""Simulation study: bias and RMSE of reserve estimates across threshold selectors.

One replication draws a sample of size ``n`` from the true composite model,
applies every selector, fits each bulk family and the Pareto tail, and
estimates the reserve of the fitted model.  Bias and RMSE are taken against
the reserve of the true model.

Seeds.  All randomness derives from the master ``seed`` through
``numpy.random.SeedSequence`` spawn keys:

* ``(2, block)``: the true reserve,
* ``(3, replicate, block)``: the claim sample of a replicate,
* ``(1, replicate, cell, block)``: the reserve simulation of one cell,

so any replicate or cell can be recomputed in isolation, and the result does
not depend on the number of workers.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import distributions as dist
from .composite import (CompositeModel, PMode, fit_composite, p_below_empirical,
                        sample_composite, scollnik_model)
from .distributions import BULK_FAMILIES, DistributionSpec, Family
from .fitting import FitMode, fit_scollnik
from .reserve import block_rng, estimate_reserves
from .tailselect import Method, select, sorted_sample

__all__ = [
    "CellKey",
    "CellSummary",
    "ExperimentConfig",
    "ExperimentResult",
    "ReplicationResult",
    "DESIGN",
    "format_table",
    "load_config",
    "run_replication",
    "run_study",
    "summarize",
    "true_model",
    "true_reserve",
    "write_csv",
]

SCHEMA = 1

#: true model parameters of the simulation design (bulk families and Pareto tail)
DESIGN = {
    Family.GAMMA: (10.0, 1.0),
    Family.LOGNORMAL: (1.5, 1.27),
    Family.WEIBULL: (2.0, 11.28),
    Family.LOGGAMMA: (6.0, 3.04),
    Family.PARETO2: (2.5, 75.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    true_family: Family = Family.GAMMA
    true_params: tuple = DESIGN[Family.GAMMA]
    tail_params: tuple = DESIGN[Family.PARETO2]
    gamma: float = 0.08
    n: int = 5000
    lam: float = 50.0
    eps: tuple = (0.05, 0.01, 0.005)
    replications: int = 100
    sims: int = 100_000
    true_sims: int = 1_000_000
    p_mode: PMode = PMode.EMPIRICAL
    selectors: tuple = tuple(Method)
    bulk_families: tuple = BULK_FAMILIES
    fit_mode: FitMode = FitMode.TRUNCATED
    seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "true_family", Family.parse(self.true_family))
        object.__setattr__(self, "true_params", tuple(float(x) for x in self.true_params))
        object.__setattr__(self, "tail_params", tuple(float(x) for x in self.tail_params))
        object.__setattr__(self, "eps", tuple(float(x) for x in np.atleast_1d(self.eps)))
        object.__setattr__(self, "p_mode", PMode.parse(self.p_mode))
        object.__setattr__(self, "fit_mode", FitMode.parse(self.fit_mode))
        object.__setattr__(self, "selectors", tuple(Method.parse(m) for m in self.selectors))
        object.__setattr__(self, "bulk_families", tuple(Family.parse(f) for f in self.bulk_families))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.p_mode is PMode.FIXED:
            raise ValueError("p_mode must be empirical or theoretical")
        if self.true_family not in BULK_FAMILIES:
            raise ValueError(f"{self.true_family.value} is not a bulk family")
        if any(f not in BULK_FAMILIES for f in self.bulk_families):
            raise ValueError("bulk_families must be bulk families")
        if self.n < 2 or self.replications < 1 or self.sims < 1:
            raise ValueError("n, replications and sims must be positive")
        if self.true_sims < 1_000_000:
            raise ValueError("true_sims must be at least 1e6")
        DistributionSpec(self.true_family, *self.true_params)
        DistributionSpec(Family.PARETO2, *self.tail_params)

    @property
    def b_true(self) -> float:
        return float(dist.quantile(DistributionSpec(self.true_family, *self.true_params), 1.0 - self.gamma))

    def cells(self) -> list["CellKey"]:
        """Selector x bulk family cells in table order, then the M7 cell."""
        out = [CellKey(m, f, self.p_mode) for f in self.bulk_families
               for m in self.selectors if m is not Method.M7]
        if Method.M7 in self.selectors:
            out.append(CellKey(Method.M7, Family.LOGNORMAL, None))
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {
            "schema": str(SCHEMA),
            "true_family": self.true_family.value,
            "true_params": ", ".join(repr(x) for x in self.true_params),
            "tail_params": ", ".join(repr(x) for x in self.tail_params),
            "gamma": repr(self.gamma),
            "n": str(self.n),
            "lambda": repr(float(self.lam)),
            "eps": ", ".join(repr(x) for x in self.eps),
            "replications": str(self.replications),
            "sims": str(self.sims),
            "true_sims": str(self.true_sims),
            "p_mode": self.p_mode.value,
            "selectors": ", ".join(m.value for m in self.selectors),
            "bulk_families": ", ".join(f.value for f in self.bulk_families),
            "fit_mode": self.fit_mode.value,
            "seed": str(self.seed),
        }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()[:12]


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]


def load_config(source: str | os.PathLike, **overrides) -> ExperimentConfig:
    """Read an ``[experiment]`` section (``schema = 1``) from an INI file or string."""
    cp = configparser.ConfigParser()
    text = str(source)
    if "\n" not in text and os.path.exists(text):
        with open(text, encoding="utf-8") as fh:
            text = fh.read()
    cp.read_string(text)
    if "experiment" not in cp:
        raise ValueError("config lacks an [experiment] section")
    sec = cp["experiment"]
    schema = sec.get("schema")
    if schema is None or int(schema) != SCHEMA:
        raise ValueError(f"unsupported config schema {schema!r}; expected {SCHEMA}")
    known = {"schema", "true_family", "true_params", "tail_params", "gamma", "n", "lambda", "eps",
             "replications", "sims", "true_sims", "p_mode", "selectors", "bulk_families",
             "fit_mode", "seed"}
    unknown = set(sec) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    if "true_family" in sec:
        kw["true_family"] = Family.parse(sec["true_family"])
        kw["true_params"] = DESIGN[kw["true_family"]]
    if "true_params" in sec:
        kw["true_params"] = tuple(float(x) for x in _split(sec["true_params"]))
    if "tail_params" in sec:
        kw["tail_params"] = tuple(float(x) for x in _split(sec["tail_params"]))
    for key, name, conv in [("gamma", "gamma", float), ("n", "n", int), ("lambda", "lam", float),
                            ("replications", "replications", int), ("sims", "sims", int),
                            ("true_sims", "true_sims", int), ("seed", "seed", int),
                            ("p_mode", "p_mode", str), ("fit_mode", "fit_mode", str)]:
        if key in sec:
            kw[name] = conv(float(sec[key])) if conv is int else conv(sec[key])
    if "eps" in sec:
        kw["eps"] = tuple(float(x) for x in _split(sec["eps"]))
    if "selectors" in sec:
        sel = _split(sec["selectors"])
        kw["selectors"] = tuple(Method) if sel == ["all"] else tuple(Method.parse(s) for s in sel)
    if "bulk_families" in sec:
        fams = _split(sec["bulk_families"])
        kw["bulk_families"] = BULK_FAMILIES if fams == ["all"] else tuple(Family.parse(f) for f in fams)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


# ---------------------------------------------------------------------------
# models and reserves
# ---------------------------------------------------------------------------

def true_model(config: ExperimentConfig) -> CompositeModel:
    bulk = DistributionSpec(config.true_family, *config.true_params)
    tail = DistributionSpec(Family.PARETO2, *config.tail_params)
    return CompositeModel(bulk, tail, config.b_true, 1.0 - config.gamma, PMode.FIXED)


def true_reserve(config: ExperimentConfig, workers: int | None = 1) -> dict[float, float]:
    """Reserve of the true composite model for every ``eps`` in the config."""
    est = estimate_reserves(true_model(config), config.lam, config.eps, config.true_sims,
                            config.seed, "true_reserve", workers)
    return {e.query.eps: e.q_hat for e in est}


@dataclass(frozen=True)
class CellKey:
    method: Method
    bulk: Family
    p_mode: PMode | None  # None for M7, whose mixing weight is part of the fit

    @property
    def label(self) -> str:
        return f"{self.method.label}/{self.bulk.value}/{self.p_mode.value if self.p_mode else '-'}"


@dataclass(frozen=True)
class CellOutcome:
    b_hat: float = math.nan
    p_below: float = math.nan
    reserves: tuple = ()          # one per eps, empty on failure
    error: str | None = None
    flagged: bool = False

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class ReplicationResult:
    replicate: int
    cells: dict = field(default_factory=dict)   # CellKey -> CellOutcome


def _fitted_model(z: np.ndarray, b_hat: float, family: Family, config: ExperimentConfig):
    fit = fit_composite(z, b_hat, family, config.p_mode, config.fit_mode, clamp=True)
    p, p_emp = fit.p_raw, p_below_empirical(z, b_hat)
    # clamped weights, or a theoretical p far below the observed share, inflate the reserve
    flagged = fit.model.p_below != p or (config.p_mode is PMode.THEORETICAL and p < 0.5 * p_emp)
    return fit.model, p, flagged


def run_replication(config: ExperimentConfig, replicate: int) -> ReplicationResult:
    """One replicate of the study: sample, select, fit and estimate every cell."""
    truth = true_model(config)
    z = sorted_sample(sample_composite(truth, block_rng(config.seed, 0, ("sample", replicate)), config.n))
    thresholds: dict[Method, object] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for m in config.selectors:
            if m is Method.M7:
                continue
            try:
                thresholds[m] = select(z, m)
            except Exception as exc:  # selector failure voids its cells only
                thresholds[m] = exc
        cells = {}
        for ci, key in enumerate(config.cells()):
            try:
                if key.method is Method.M7:
                    fit = fit_scollnik(z)
                    model, b_hat, p, flagged = scollnik_model(fit), fit.b, fit.r, False
                else:
                    th = thresholds[key.method]
                    if isinstance(th, Exception):
                        raise th
                    b_hat = th.b_hat
                    model, p, flagged = _fitted_model(z, b_hat, key.bulk, config)
                est = estimate_reserves(model, config.lam, config.eps, config.sims, config.seed,
                                        ("reserve", replicate, ci))
                reserves = tuple(e.q_hat for e in est)
                if not all(math.isfinite(r) for r in reserves):
                    raise FloatingPointError("non-finite reserve")
                cells[key] = CellOutcome(b_hat, p, reserves, None, flagged)
            except Exception as exc:
                cells[key] = CellOutcome(error=f"{type(exc).__name__}: {exc}")
    return ReplicationResult(replicate, cells)


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellSummary:
    key: CellKey
    eps: float
    bias: float | None
    rmse: float | None
    failure_count: int
    mean_b_hat: float | None
    flagged_count: int = 0

    @property
    def absent(self) -> bool:
        return self.bias is None


@dataclass(frozen=True)
class ExperimentResult:
    config_digest: str
    true_reserve: dict
    cells: tuple   # CellSummary, in table order
    replications: int = 0

    def cell(self, method, bulk, eps, p_mode=None) -> CellSummary:
        method, bulk = Method.parse(method), Family.parse(bulk)
        for c in self.cells:
            if (c.key.method is method and c.key.bulk is bulk and math.isclose(c.eps, eps)
                    and (p_mode is None or c.key.p_mode is PMode.parse(p_mode))):
                return c
        raise KeyError((method, bulk, eps))


def summarize(replications, true_reserve: dict[float, float], config: ExperimentConfig) -> ExperimentResult:
    """Bias and RMSE per cell over the successful replications."""
    reps = sorted(replications, key=lambda r: r.replicate)
    out = []
    for key in config.cells():
        outcomes = [r.cells[key] for r in reps if key in r.cells]
        good = [o for o in outcomes if o.ok]
        for j, eps in enumerate(config.eps):
            q = true_reserve[eps]
            if good:
                err = np.array([o.reserves[j] for o in good]) - q
                bias = float(np.mean(err))
                rmse = float(math.sqrt(np.mean(err * err)))
                mean_b = float(np.mean([o.b_hat for o in good]))
            else:
                bias = rmse = mean_b = None
            out.append(CellSummary(key, eps, bias, rmse, len(outcomes) - len(good), mean_b,
                                   sum(o.flagged for o in good)))
    return ExperimentResult(config.digest, dict(true_reserve), tuple(out), len(reps))


def _run_chunk(args):
    config, reps = args
    return [run_replication(config, r) for r in reps]


def run_study(config: ExperimentConfig, workers: int | None = 1,
              true_reserves: dict[float, float] | None = None) -> ExperimentResult:
    """Run all replications (spread over ``workers`` processes) and summarise."""
    if true_reserves is None:
        true_reserves = true_reserve(config, workers)
    workers = (os.cpu_count() or 1) if workers is None else max(1, int(workers))
    reps = range(config.replications)
    if workers == 1:
        results = _run_chunk((config, reps))
    else:
        chunks = [reps[w::workers] for w in range(min(workers, len(reps)))]
        with ProcessPoolExecutor(len(chunks)) as pool:
            results = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks]) for r in part]
    return summarize(results, true_reserves, config)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _num(x) -> str:
    return "" if x is None else format(x, ".6g")


def write_csv(result: ExperimentResult, path_or_buf) -> None:
    """One row per cell and eps, every row carrying the config digest."""
    header = ["config_digest", "eps", "true_reserve", "selector", "bulk_family", "p_mode",
              "bias", "rmse", "failures", "flagged", "mean_b_hat"]
    own = isinstance(path_or_buf, (str, os.PathLike))
    fh = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c in result.cells:
            w.writerow([result.config_digest, _num(c.eps), _num(result.true_reserve[c.eps]),
                        c.key.method.label, c.key.bulk.value,
                        c.key.p_mode.value if c.key.p_mode else "-",
                        _num(c.bias), _num(c.rmse), c.failure_count, c.flagged_count, _num(c.mean_b_hat)])
    finally:
        if own:
            fh.close()


def format_table(result: ExperimentResult, stat: str = "bias") -> str:
    """Aligned text: one block per eps, rows by bulk family, one column per selector."""
    methods = []
    for c in result.cells:
        if c.key.method not in methods:
            methods.append(c.key.method)
    lines = [f"# config {result.config_digest}  replications {result.replications}  ({stat})"]
    for eps in result.true_reserve:
        lines.append(f"eps = {eps:g}   true reserve = {result.true_reserve[eps]:.2f}")
        lines.append(f"{'bulk':<10}" + "".join(f"{m.label:>12}" for m in methods))
        families = []
        for c in result.cells:
            if c.key.bulk not in families and c.key.method is not Method.M7:
                families.append(c.key.bulk)
        for fam in families:
            row = f"{fam.value:<10}"
            for m in methods:
                cell = next((c for c in result.cells if c.key.method is m and math.isclose(c.eps, eps)
                             and (c.key.bulk is fam or m is Method.M7)), None)
                val = None if cell is None else getattr(cell, stat)
                row += f"{'--' if val is None else format(val, '.2f'):>12}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


def scaled(config: ExperimentConfig, c: float) -> ExperimentConfig:
    """The same design with every claim amount multiplied by ``c``."""
    a, s = config.true_params
    fam = config.true_family
    if fam is Family.LOGNORMAL:
        params = (a + math.log(c), s)
    elif fam is Family.LOGGAMMA:
        raise ValueError("loggamma is not closed under scaling")
    else:
        params = (a, s * c)
    return replace(config, true_params=params, tail_params=(config.tail_params[0], config.tail_params[1] * c))
