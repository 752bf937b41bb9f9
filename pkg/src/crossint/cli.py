"""``crossint``: convergence experiments and a time-to-accuracy report.

Experiments write CSV rows ``method,n,estimate,error,runtime_seconds,evals``.
Runtimes are cumulative wall-clock seconds since the start of the method's
sweep, which is the time needed to reach that row's accuracy.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .accel import aitken
from .basket import BasketConfig, GaussianRampTarget, payoff, reference_value
from .fouriertt import FourierTTModel
from .gaussmodel import GaussianSpec, equicorrelated
from .montecarlo import sweep as mc_sweep
from .numcore import NotPositiveDefiniteError, QuadratureRule, Rng
from .ttcross import TTXModel, whiten

__all__ = [
    "ConfigError",
    "ConvergenceRecord",
    "ExperimentConfig",
    "emit_report",
    "fit_slope",
    "main",
    "parse_config",
    "read_csv",
    "run_basket_fourier",
    "run_basket_mc",
    "run_basket_ttx",
    "run_gauss_ttx",
]

EXPERIMENTS = ("gauss-ttx", "basket-ttx", "basket-fourier", "basket-mc", "report")
CSV_HEADER = ["method", "n", "estimate", "error", "runtime_seconds", "evals"]
THRESHOLDS = (1e-3, 1e-6, 1e-9)
REPORT_METHODS = ("fourier-tt", "ttx+aitken", "ttx", "mc")
MISSING = "—"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4

# new nodes per pseudo-inverse rebuild is max(1, n // GROWTH_DIVISOR)
GROWTH_DIVISOR = 16
GAUSS_RMS_SAMPLES = 100_000
WHITENED_GH_ORDER = 40

# derived RNG streams
STREAM_NODES, STREAM_RMS, STREAM_MC = 1, 2, 3


class ConfigError(ValueError):
    """Bad configuration file or option."""


class BudgetExceeded(Exception):
    """A sweep stopped early because the time budget ran out."""


@dataclass(frozen=True)
class ConvergenceRecord:
    method: str
    n: int
    estimate: float
    error: float
    runtime_seconds: float
    evals: int


@dataclass
class ExperimentConfig:
    experiment: str = "basket-ttx"
    dim: int = 10
    rho: float = 0.0
    strike: float = 1.0
    rate: float = 0.0
    mu: list = field(default_factory=lambda: [-0.5])
    weights: list | None = None
    sweep: list | None = None
    pool: int = 256
    local_steps: int = 0
    quad_tol: float = 1e-13
    pinv_tol: float = 1e-12
    n_terms_max: int | None = None
    order: list | None = None
    whiten: bool = False
    seed: int = 0
    threads: int = 1
    out_path: str | None = None
    budget_seconds: float = 1800.0

    def permutation(self) -> np.ndarray:
        """0-based coordinate order; ``order`` in the config is 1-based."""
        if self.order is None:
            return np.arange(self.dim)
        return np.asarray(self.order, dtype=int) - 1

    def mean_vector(self) -> np.ndarray:
        return _broadcast(self.mu, self.dim, "mu")[self.permutation()]

    def weight_vector(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.dim, 1.0 / self.dim)
        return _broadcast(self.weights, self.dim, "weights")[self.permutation()]

    def covariance(self) -> np.ndarray:
        if self.dim > 1 and not -1.0 / (self.dim - 1) < self.rho < 1.0:
            raise ConfigError(f"rho={self.rho} gives no valid covariance in dim {self.dim}")
        p = self.permutation()
        return equicorrelated(self.dim, self.rho)[np.ix_(p, p)]

    def gaussian(self) -> GaussianSpec:
        try:
            return GaussianSpec(self.mean_vector(), self.covariance(), rate=self.rate)
        except NotPositiveDefiniteError as exc:
            raise ConfigError(str(exc)) from exc

    def basket(self) -> BasketConfig:
        try:
            return BasketConfig(self.weight_vector(), self.strike, self.gaussian())
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sweep_values(self) -> list[int]:
        if self.sweep is not None:
            return list(self.sweep)
        if self.experiment == "gauss-ttx":
            return [1, 3, 5, 7, 9, 11, 15, 21]
        if self.experiment == "basket-fourier":
            return list(range(10, 501, 10))
        if self.experiment == "basket-mc":
            return [10**k for k in range(2, 9)]
        return [4 << k for k in range(9)]


def _broadcast(values, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 1:
        return np.full(dim, float(arr[0]))
    if arr.size != dim:
        raise ConfigError(f"{name} has {arr.size} entries, expected 1 or {dim}")
    return arr


_INT_KEYS = {"dim", "pool", "local_steps", "n_terms_max"}
_FLOAT_KEYS = {"rho", "strike", "rate", "quad_tol", "pinv_tol"}
_LIST_KEYS = {"mu", "weights"}
_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = replace(base) if base is not None else ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                setattr(cfg, key, int(value))
            elif key in _FLOAT_KEYS:
                setattr(cfg, key, float(value))
            elif key in _LIST_KEYS:
                setattr(cfg, key, [float(v) for v in value.split(",")])
            elif key == "sweep":
                cfg.sweep = [int(v) for v in value.split(",")]
            elif key == "order":
                cfg.order = [int(v) for v in value.split(",")]
            elif key == "whiten":
                if value.lower() not in _BOOL_WORDS:
                    raise ValueError(value)
                cfg.whiten = _BOOL_WORDS[value.lower()]
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.dim < 1:
        raise ConfigError("dim must be positive")
    sweep = cfg.sweep_values()
    if not sweep or any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise ConfigError("sweep must be strictly increasing")
    if sweep[0] < 1:
        raise ConfigError("sweep values must be positive")
    if cfg.pool < 1 or cfg.local_steps < 0:
        raise ConfigError("pool must be positive and local_steps non-negative")
    if not 0.0 < cfg.pinv_tol < 1.0 or not cfg.quad_tol > 0.0:
        raise ConfigError("pinv_tol must lie in (0, 1) and quad_tol be positive")
    if not cfg.budget_seconds > 0.0:
        raise ConfigError("budget must be positive")
    if cfg.n_terms_max is not None and cfg.n_terms_max < 1:
        raise ConfigError("n_terms_max must be positive")
    if cfg.order is not None and sorted(cfg.order) != list(range(1, cfg.dim + 1)):
        raise ConfigError(f"order must be a permutation of 1..{cfg.dim}")


# ---------------------------------------------------------------------------
# experiments


class _Clock:
    def __init__(self, budget: float):
        self.start = time.perf_counter()
        self.budget = budget

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def over(self) -> bool:
        return self.elapsed() > self.budget


def _ttx_model(cfg: ExperimentConfig, target: GaussianRampTarget) -> TTXModel:
    """Model on the structured target, or on its whitened form.

    Whitening gives up the analytic line integrals, so those fall back to
    Gauss-Hermite quadrature against the standard normal.
    """
    if cfg.whiten:
        return TTXModel(whiten(target, target.spec), pinv_tol=cfg.pinv_tol,
                        quad=QuadratureRule("gauss-hermite", order=WHITENED_GH_ORDER),
                        threads=cfg.threads)
    return TTXModel(target, pinv_tol=cfg.pinv_tol, threads=cfg.threads)


def run_gauss_ttx(cfg: ExperimentConfig) -> list[ConvergenceRecord]:
    """L2 error of a greedy TT-X of the correlated Gaussian density.

    The norm is estimated by Monte Carlo over draws from the density itself,
    weighting each squared residual by the inverse density. Whitened runs
    measure it in the original coordinates.
    """
    spec = cfg.gaussian()
    model = _ttx_model(cfg, GaussianRampTarget(spec))
    sampler = model.target.measure
    # |det L| scales the squared norm when y = L^{-1} (x - mu)
    norm_scale = math.exp(-0.25 * spec._logdet) if cfg.whiten else 1.0
    rng = Rng(cfg.seed).split(STREAM_NODES)
    clock = _Clock(cfg.budget_seconds)
    records = []
    for n in cfg.sweep_values():
        while model.n < n:
            model.add_node(rng, cfg.pool, cfg.local_steps)
        err = norm_scale * model.rms_error(sampler, Rng(cfg.seed).split(STREAM_RMS),
                                           GAUSS_RMS_SAMPLES, l2=True)
        records.append(ConvergenceRecord("ttx-gauss", n, model.integrate(), err,
                                         clock.elapsed(), model.assembly_evals))
        if clock.over():
            raise BudgetExceeded(records)
    return records


def _basket_reference(cfg: ExperimentConfig) -> float:
    return reference_value(cfg.basket(), cfg.n_terms_max, quad_tol=cfg.quad_tol)


def run_basket_ttx(cfg: ExperimentConfig, accelerate: bool = True,
                   reference: float | None = None) -> list[ConvergenceRecord]:
    """Greedy TT-X sweep over node counts, optionally with Aitken rows."""
    basket = cfg.basket()
    ref = _basket_reference(cfg) if reference is None else reference
    model = _ttx_model(cfg, GaussianRampTarget.for_basket(basket))
    rng = Rng(cfg.seed).split(STREAM_NODES)
    clock = _Clock(cfg.budget_seconds)
    records: list[ConvergenceRecord] = []
    truncated = False
    for n in cfg.sweep_values():
        while model.n < n:
            batch = min(max(1, model.n // GROWTH_DIVISOR), n - model.n)
            model.add_nodes(rng, batch, cfg.pool, cfg.local_steps)
        est = model.integrate()
        if not math.isfinite(est):
            raise ArithmeticError(f"non-finite TT-X estimate at n={n}")
        records.append(ConvergenceRecord("ttx", n, est, abs(est - ref), clock.elapsed(),
                                         model.assembly_evals))
        if clock.over():
            truncated = True
            break
    if accelerate and len(records) >= 3:
        acc = aitken([r.estimate for r in records])
        for i, val in enumerate(acc, start=1):
            src = records[i + 1]
            records.append(ConvergenceRecord("ttx+aitken", src.n, float(val), abs(val - ref),
                                             src.runtime_seconds, src.evals))
    if truncated:
        raise BudgetExceeded(records)
    return records


def run_basket_fourier(cfg: ExperimentConfig) -> list[ConvergenceRecord]:
    """Fourier-TT sweep over truncations against the highest truncation."""
    basket = cfg.basket()
    sweep = cfg.sweep_values()
    top = cfg.n_terms_max or 2 * sweep[-1]
    model = FourierTTModel(basket, top, quad_tol=cfg.quad_tol)
    clock = _Clock(cfg.budget_seconds)
    records = []
    for n in sweep:
        before = model.matrix_integrals
        est = model.integrate(n)
        records.append(ConvergenceRecord("fourier-tt", n, est, math.nan, clock.elapsed(),
                                         model.matrix_integrals - before))
        if clock.over():
            break
    ref = model.integrate(top)
    records = [replace(r, error=abs(r.estimate - ref)) for r in records]
    if len(records) < len(sweep):
        raise BudgetExceeded(records)
    return records


def run_basket_mc(cfg: ExperimentConfig, reference: float | None = None) -> list[ConvergenceRecord]:
    """Monte Carlo sweep; ``mc-stderr`` rows carry the standard error."""
    basket = cfg.basket()
    ref = _basket_reference(cfg) if reference is None else reference
    clock = _Clock(cfg.budget_seconds)
    records = []
    counts = cfg.sweep_values()
    gen = mc_sweep(lambda x: payoff(basket, x), basket.gaussian, counts,
                   int(Rng(cfg.seed).split(STREAM_MC).seed), cfg.threads)
    last_n, last_t = 0, 0.0
    for n in counts:
        # stop before a count that would overrun the budget at the current rate
        if last_n and clock.elapsed() + (n - last_n) * last_t / last_n > cfg.budget_seconds:
            raise BudgetExceeded(records)
        est = next(gen)
        t = clock.elapsed()
        last_n, last_t = n, t
        mean = est.mean * math.exp(basket.gaussian.log_discount)
        records.append(ConvergenceRecord("mc", n, mean, abs(mean - ref), t, n))
        records.append(ConvergenceRecord("mc-stderr", n, mean, est.std_error, t, n))
    return records


# ---------------------------------------------------------------------------
# analysis and output


def fit_slope(records, x_field: str = "n", bounds: tuple[float, float] | None = None,
              method: str | None = None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(x)``."""
    if x_field not in ("n", "runtime"):
        raise ValueError("x_field is 'n' or 'runtime'")
    lo, hi = bounds if bounds is not None else (-math.inf, math.inf)
    xs, ys = [], []
    for r in records:
        if method is not None and r.method != method:
            continue
        x = r.n if x_field == "n" else r.runtime_seconds
        if lo <= x <= hi and r.error > 0 and x > 0:
            xs.append(math.log(x))
            ys.append(math.log(r.error))
    if len(xs) < 3:
        raise ValueError("need at least three points with positive error")
    return float(np.polyfit(xs, ys, 1)[0])


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(records, stream) -> None:
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.method] + [_fmt(getattr(r, f.name)) for f in fields(r)[1:]])


def read_csv(text: str) -> list[ConvergenceRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError("unexpected CSV header")
    return [ConvergenceRecord(m, int(n), float(e), float(er), float(t), int(ev))
            for m, n, e, er, t, ev in rows[1:]]


def time_to_threshold(records, method: str, eps: float) -> float | None:
    hits = [r.runtime_seconds for r in records if r.method == method and r.error <= eps]
    return min(hits) if hits else None


def format_table(records) -> str:
    methods = [m for m in REPORT_METHODS if any(r.method == m for r in records)]
    methods += sorted({r.method for r in records} - set(methods) - {"mc-stderr"})
    head = ["method"] + [f"eps={eps:g}" for eps in THRESHOLDS]
    rows = [head]
    for m in methods:
        cells = [m]
        for eps in THRESHOLDS:
            t = time_to_threshold(records, m, eps)
            cells.append(MISSING if t is None else f"{t:.3g} s")
        rows.append(cells)
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.append("measured wall-clock on this host; absolute times are machine-dependent")
    return "\n".join(lines) + "\n"


def emit_report(records, out_path: str | None) -> str:
    """Write the CSV (to ``out_path`` or stdout) and return the text table.

    With a path, the table is also written next to it as ``<path>.table.txt``.
    """
    if not records:
        raise ValueError("no records to report")
    table = format_table(records)
    if out_path is None:
        write_csv(records, sys.stdout)
    else:
        path = Path(out_path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            write_csv(records, fh)
        path.with_name(path.name + ".table.txt").write_text(table, encoding="utf-8")
    return table


def run_report(cfg: ExperimentConfig) -> list[ConvergenceRecord]:
    """All basket methods with their default sweeps, sharing one reference."""
    ref = _basket_reference(cfg)
    out: list[ConvergenceRecord] = []
    truncated = False
    for exp in ("basket-fourier", "basket-ttx", "basket-mc"):
        sub = replace(cfg, experiment=exp, sweep=None)
        try:
            if exp == "basket-fourier":
                out += run_basket_fourier(sub)
            elif exp == "basket-ttx":
                out += run_basket_ttx(sub, reference=ref)
            else:
                out += run_basket_mc(sub, reference=ref)
        except BudgetExceeded as exc:
            out += exc.args[0]
            truncated = True
    if truncated:
        raise BudgetExceeded(out)
    return out


def run_experiment(cfg: ExperimentConfig) -> list[ConvergenceRecord]:
    runners = {
        "gauss-ttx": run_gauss_ttx,
        "basket-ttx": run_basket_ttx,
        "basket-fourier": run_basket_fourier,
        "basket-mc": run_basket_mc,
        "report": run_report,
    }
    return runners[cfg.experiment](cfg)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crossint", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=int, default=0, help="64-bit unsigned seed")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.add_argument("--budget-seconds", type=float, default=1800.0)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if args.threads < 1:
            raise ConfigError("threads must be positive")
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        base = ExperimentConfig(experiment=args.experiment, seed=args.seed, threads=args.threads,
                                out_path=args.out, budget_seconds=args.budget_seconds)
        cfg = parse_config(text, base)
        code = EXIT_OK
        try:
            records = run_experiment(cfg)
        except BudgetExceeded as exc:
            records = exc.args[0]
            code = EXIT_BUDGET
            print(f"crossint: budget of {cfg.budget_seconds:g} s exhausted, sweep truncated",
                  file=sys.stderr)
        if records:
            table = emit_report(records, cfg.out_path)
            print(table, end="", file=sys.stdout if cfg.out_path else sys.stderr)
        print(f"crossint: pinv cutoff rel_tol={cfg.pinv_tol:g} (singular values below "
              f"rel_tol * s_max are dropped)", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"crossint: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"crossint: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"crossint: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
