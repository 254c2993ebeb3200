"""Config-driven Monte Carlo experiment runner.

Reproduces the simulation protocol around the statistics: size and power
tables over theta grids with bootstrap calibration, and paired
true-vs-pooled-bootstrap density curves.  Outputs are plain CSV plus a
JSON manifest; reruns with the same config and master seed are
byte-identical regardless of the worker count.
"""

from __future__ import annotations

import hashlib
import json
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .bandwidth import BandwidthRule, select_bandwidths
from .bootstrap import fit_ou_ls, resample_path
from .errors import ConfigError, MarkovgateError, ReplicateFailureError
from .estimators import Bandwidths, TripleSample
from .kernels import get_kernel
from .models import ModelSpec, Path, SimConfig, simulate
from .stats import compute_statistic
from .weights import WeightSpec

__all__ = ["ExperimentConfig", "PowerTable", "BootstrapDensityResult",
           "run_size", "run_power", "run_bootstrap_density", "resolve_threads",
           "load_config", "bootstrap_pvalue"]

MAX_REP_FAILURE_FRAC = 0.05
THREADS_ENV = "MARKOVGATE_THREADS"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: model family x theta grid x Monte Carlo protocol."""

    model: ModelSpec = field(default_factory=ModelSpec)
    sim: SimConfig = field(default_factory=lambda: SimConfig(n_obs=1200))
    statistic: str = "t1_star"
    bandwidth: BandwidthRule = field(default_factory=BandwidthRule)
    weight: WeightSpec | None = None
    mc_reps: int = 200
    bootstrap_B: int = 99
    alpha_levels: tuple = (0.01, 0.05)
    theta_grid: tuple = (0.0,)
    output_dir: str = "markovgate-out"
    master_seed: int = 0
    bootstrap_mode: str = "per_rep"      # per_rep | pooled | null_calibrated
    pooled_B: int = 3
    early_stop: bool = True
    threads: int | None = None
    kernel: str = "epanechnikov"

    def __post_init__(self):
        if self.mc_reps < 1:
            raise ConfigError("mc_reps must be at least 1")
        if self.bootstrap_B < 1 or self.pooled_B < 1:
            raise ConfigError("bootstrap replicate counts must be positive")
        if not all(0.0 < a < 1.0 for a in self.alpha_levels):
            raise ConfigError("alpha_levels must lie in (0, 1)")
        if not all(0.0 <= t <= 1.0 for t in self.theta_grid):
            raise ConfigError("theta_grid must lie in [0, 1]")
        if self.bootstrap_mode not in ("per_rep", "pooled", "null_calibrated"):
            raise ConfigError(
                "bootstrap_mode must be per_rep, pooled, or null_calibrated")
        if self.statistic not in ("t0", "t1", "t1_star", "t2"):
            raise ConfigError(f"unknown statistic: {self.statistic!r}")

    @property
    def bandwidth_target(self) -> str:
        return "t2" if self.statistic == "t2" else "t1_family"

    def to_json_dict(self) -> dict:
        d = {
            "model": asdict(self.model),
            "sim": asdict(self.sim),
            "statistic": self.statistic,
            "bandwidth": {k: v for k, v in asdict(self.bandwidth).items()
                          if k != "fixed"},
            "weight": asdict(self.weight) if self.weight else None,
            "mc_reps": self.mc_reps,
            "bootstrap_B": self.bootstrap_B,
            "alpha_levels": list(self.alpha_levels),
            "theta_grid": list(self.theta_grid),
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
            "bootstrap_mode": self.bootstrap_mode,
            "pooled_B": self.pooled_B,
            "early_stop": self.early_stop,
            "threads": self.threads,
            "kernel": self.kernel,
        }
        if self.bandwidth.fixed is not None:
            d["bandwidth"]["fixed"] = list(self.bandwidth.fixed.as_array())
        return d


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "variant": {"enum": ["ou_null", "h1_stochastic_level",
                                     "h2_stochastic_vol", "h3_jumps"]},
                "kappa": {"type": "number", "exclusiveMinimum": 0},
                "alpha": {"type": "number"},
                "sigma": {"type": "number", "exclusiveMinimum": 0},
                "theta": {"type": "number", "minimum": 0, "maximum": 1},
                "s_scale": {"type": "number", "exclusiveMinimum": 0},
                "jump_type": {"enum": ["gaussian_iid", "cir_driven"]},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_obs": {"type": "integer", "minimum": 12},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "substeps": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
            },
        },
        "statistic": {"enum": ["t0", "t1", "t1_star", "t2"]},
        "bandwidth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["empirical_rule", "fixed", "cv"]},
                "c_scale": {"type": "number", "exclusiveMinimum": 0},
                "exponent": {"type": ["number", "null"]},
                "fixed": {"type": "array", "items": {"type": "number"},
                          "minItems": 5, "maxItems": 5},
            },
        },
        "weight": {
            "type": ["object", "null"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["density_weight", "ratio_weight",
                                  "x_only_weight"]},
                "trim_quantile": {"type": "number", "exclusiveMinimum": 0,
                                  "exclusiveMaximum": 0.5},
                "smoothness": {"type": "number", "exclusiveMinimum": 0,
                               "maximum": 0.5},
            },
        },
        "mc_reps": {"type": "integer", "minimum": 1},
        "bootstrap_B": {"type": "integer", "minimum": 1},
        "alpha_levels": {"type": "array", "items": {"type": "number"}},
        "theta_grid": {"type": "array", "items": {"type": "number"}},
        "output_dir": {"type": "string"},
        "master_seed": {"type": "integer"},
        "bootstrap_mode": {"enum": ["per_rep", "pooled", "null_calibrated"]},
        "pooled_B": {"type": "integer", "minimum": 1},
        "early_stop": {"type": "boolean"},
        "threads": {"type": ["integer", "null"], "minimum": 1},
        "kernel": {"enum": ["epanechnikov", "quartic", "triweight"]},
    },
}


def load_config(path_or_dict) -> ExperimentConfig:
    """Parse and validate a JSON experiment config."""
    import jsonschema

    if isinstance(path_or_dict, dict):
        raw = path_or_dict
    else:
        try:
            with open(path_or_dict) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(
                f"malformed JSON at line {exc.lineno}, column {exc.colno}: "
                f"{exc.msg}") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        field_path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config field {field_path}: {exc.message}") from exc
    try:
        model = ModelSpec(**raw.get("model", {}))
        sim = SimConfig(**{"n_obs": 1200, **raw.get("sim", {})})
        bw_raw = dict(raw.get("bandwidth", {}))
        if "fixed" in bw_raw:
            bw_raw["fixed"] = Bandwidths(*bw_raw["fixed"])
        bandwidth = BandwidthRule(**bw_raw)
        weight = WeightSpec(**raw["weight"]) if raw.get("weight") else None
        kwargs = {k: raw[k] for k in
                  ("statistic", "mc_reps", "bootstrap_B", "output_dir",
                   "master_seed", "bootstrap_mode", "pooled_B", "early_stop",
                   "threads", "kernel") if k in raw}
        if "alpha_levels" in raw:
            kwargs["alpha_levels"] = tuple(raw["alpha_levels"])
        if "theta_grid" in raw:
            kwargs["theta_grid"] = tuple(raw["theta_grid"])
        return ExperimentConfig(model=model, sim=sim, bandwidth=bandwidth,
                                weight=weight, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def paper_scale(config: ExperimentConfig) -> ExperimentConfig:
    """Restore the reference protocol: n=2400, 1000 reps, pooled-3 bootstrap."""
    return replace(config, sim=replace(config.sim, n_obs=2400),
                   mc_reps=1000, bootstrap_mode="pooled", pooled_B=3)


def resolve_threads(config_threads: int | None = None) -> int:
    if config_threads is not None:
        return max(1, int(config_threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def rep_seed(master_seed: int, *path: int) -> int:
    """Stable derived seed for one Monte Carlo unit of work."""
    ss = np.random.SeedSequence(entropy=int(master_seed),
                                spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

@dataclass
class PowerTable:
    """Rejection rates keyed by (family tag, alpha, theta)."""

    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def add(self, family: str, s_or_jumptype: str, alpha: float, theta: float,
            rejections: int, reps: int) -> None:
        rate = rejections / reps if reps else float("nan")
        se = float(np.sqrt(rate * (1.0 - rate) / reps)) if reps else float("nan")
        self.rows.append({
            "family": family, "s_or_jumptype": s_or_jumptype,
            "alpha": alpha, "theta": theta, "rejections": rejections,
            "reps": reps, "rate": rate, "se": se,
        })

    def rate(self, alpha: float, theta: float) -> float:
        for row in self.rows:
            if row["alpha"] == alpha and row["theta"] == theta:
                return row["rate"]
        raise KeyError((alpha, theta))

    def to_csv_text(self) -> str:
        lines = ["family,s_or_jumptype,alpha,theta,rejections,reps,rate,se"]
        for r in self.rows:
            lines.append(
                f"{r['family']},{r['s_or_jumptype']},{repr(r['alpha'])},"
                f"{repr(r['theta'])},{r['rejections']},{r['reps']},"
                f"{repr(r['rate'])},{repr(r['se'])}")
        return "\n".join(lines) + "\n"


@dataclass
class BootstrapDensityResult:
    """Paired statistic/bootstrap samples with density curves on one grid."""

    grid: np.ndarray
    true_density: np.ndarray
    bootstrap_density: np.ndarray
    ks_distance: float
    statistic_values: np.ndarray
    bootstrap_values: np.ndarray

    def to_csv_text(self) -> str:
        lines = ["grid,true_density,bootstrap_density"]
        for g, t, b in zip(self.grid, self.true_density, self.bootstrap_density):
            lines.append(f"{repr(float(g))},{repr(float(t))},{repr(float(b))}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Per-replication work
# ---------------------------------------------------------------------------

def _statistic_on_path(config: ExperimentConfig, path: Path):
    sample = TripleSample.from_path(path.values, path.delta)
    bw = select_bandwidths(config.bandwidth, sample, config.bandwidth_target)
    report = compute_statistic(config.statistic, sample, bw, config.weight,
                               kernel_w=config.kernel, kernel_k=config.kernel,
                               calibration="none")
    return report.statistic, bw


def bootstrap_pvalue(config: ExperimentConfig, path: Path, stat: float,
                     bw: Bandwidths, seed: int):
    """Residual-bootstrap p-value with optional early stopping.

    With early stopping the loop ends as soon as every requested alpha
    decision is certain; decisions equal the full-B run's exactly, and the
    returned p-value interval brackets the full-B p-value.
    """
    fit = fit_ou_ls(path)
    alphas = sorted(config.alpha_levels)
    B = config.bootstrap_B
    exceed = 0
    successes = 0
    failures = 0
    undecided = set(alphas)
    decisions: dict = {}
    for b in range(B):
        bpath = resample_path(fit, path.n_obs, seed, replicate=b)
        try:
            bsample = TripleSample.from_path(bpath.values, bpath.delta)
            rep = compute_statistic(config.statistic, bsample, bw,
                                    config.weight, kernel_w=config.kernel,
                                    kernel_k=config.kernel,
                                    calibration="none")
        except MarkovgateError:
            failures += 1
            continue
        successes += 1
        if rep.statistic >= stat:
            exceed += 1
        if config.early_stop and undecided:
            remaining = B - b - 1
            for alpha in list(undecided):
                # p upper bound: every remaining replicate exceeds
                if (1 + exceed + remaining) / (successes + remaining + 1) <= alpha:
                    decisions[alpha] = True
                    undecided.discard(alpha)
                # p lower bound: no remaining replicate exceeds
                elif (1 + exceed) / (successes + remaining + 1) > alpha:
                    decisions[alpha] = False
                    undecided.discard(alpha)
            if not undecided:
                break
    if failures > 0.10 * B:
        raise ReplicateFailureError(
            f"{failures} of {B} bootstrap replicates failed")
    p_point = (1.0 + exceed) / (successes + 1.0)
    for alpha in undecided:
        decisions[alpha] = p_point <= alpha
    return decisions, p_point, successes


def _power_rep(payload) -> dict:
    cfg_dict, theta, rep_id, mode = payload
    config = load_config(cfg_dict)
    model = replace(config.model, theta=theta)
    seed = rep_seed(config.master_seed, int(round(theta * 1_000_000)), rep_id)
    sim = replace(config.sim, seed=seed)
    out = {"rep": rep_id, "theta": theta, "ok": False, "error": ""}
    try:
        path = simulate(model, sim)
        stat, bw = _statistic_on_path(config, path)
        out["statistic"] = stat
        if mode == "per_rep":
            decisions, p_point, used = bootstrap_pvalue(config, path, stat,
                                                        bw, seed)
            out["decisions"] = {repr(a): bool(r) for a, r in decisions.items()}
            out["p_bootstrap"] = p_point
            out["replicates_used"] = used
        elif mode == "pooled":
            fit = fit_ou_ls(path)
            boots = []
            for b in range(config.pooled_B):
                bpath = resample_path(fit, path.n_obs, seed, replicate=b)
                bsample = TripleSample.from_path(bpath.values, bpath.delta)
                rep = compute_statistic(config.statistic, bsample, bw,
                                        config.weight, kernel_w=config.kernel,
                                        kernel_k=config.kernel,
                                        calibration="none")
                boots.append(rep.statistic)
            out["bootstrap_stats"] = boots
        # mode == "stat_only": nothing beyond the statistic
        out["ok"] = True
    except MarkovgateError as exc:
        out["error"] = f"{type(exc).__name__}: {exc}"
    return out


def _parallel_map(fn, payloads, threads: int):
    if threads <= 1:
        return [fn(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, payloads, chunksize=1))


def _family_tag(model: ModelSpec):
    if model.variant == "ou_null":
        return "ou_null", ""
    if model.variant == "h3_jumps":
        return model.variant, model.jump_type
    return model.variant, f"{model.s_scale:g}"


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

def _run_theta_batch(config, cfg_dict, theta, mode, threads):
    payloads = [(cfg_dict, float(theta), rep, mode)
                for rep in range(config.mc_reps)]
    results = _parallel_map(_power_rep, payloads, threads)
    results.sort(key=lambda r: r["rep"])
    good = [r for r in results if r["ok"]]
    bad = [r for r in results if not r["ok"]]
    if len(bad) > MAX_REP_FAILURE_FRAC * config.mc_reps:
        raise ReplicateFailureError(
            f"{len(bad)} of {config.mc_reps} Monte Carlo reps failed at "
            f"theta={theta:g}; first: {bad[0]['error']}")
    return good, bad


def _pooled_pvalues(stats_arr: np.ndarray, pooled: np.ndarray) -> np.ndarray:
    exceed = (pooled[None, :] >= stats_arr[:, None]).sum(axis=1)
    return (1.0 + exceed) / (pooled.size + 1.0)


def run_power(config: ExperimentConfig, threads: int | None = None) -> PowerTable:
    """Monte Carlo rejection rates over the theta grid and alpha levels.

    ``per_rep`` refits the null and bootstraps within every replication
    (the field procedure; used for size studies).  ``pooled`` pools each
    theta batch's own bootstrap statistics.  ``null_calibrated`` pools
    bootstrap statistics from a theta=0 batch of the same family and
    judges every statistic against that fixed null distribution, which is
    the reference power protocol: a per-replication refit under the
    alternative absorbs the alternative's marginal signature into the
    null fit and cancels most detectable power.
    """
    threads = resolve_threads(threads if threads is not None else config.threads)
    cfg_dict = config.to_json_dict()
    table = PowerTable()
    family, s_tag = _family_tag(config.model)
    failures_total = []
    null_pool = None
    null_batch = None
    if config.bootstrap_mode == "null_calibrated":
        null_batch, bad = _run_theta_batch(config, cfg_dict, 0.0, "pooled",
                                           threads)
        failures_total.extend(bad)
        null_pool = np.array([b for r in null_batch
                              for b in r["bootstrap_stats"]])
    for theta in config.theta_grid:
        if config.bootstrap_mode == "per_rep":
            good, bad = _run_theta_batch(config, cfg_dict, theta, "per_rep",
                                         threads)
            failures_total.extend(bad)
            for alpha in config.alpha_levels:
                rejections = sum(r["decisions"][repr(alpha)] for r in good)
                table.add(family, s_tag, alpha, theta, rejections, len(good))
            continue
        if config.bootstrap_mode == "pooled":
            good, bad = _run_theta_batch(config, cfg_dict, theta, "pooled",
                                         threads)
            failures_total.extend(bad)
            pooled = np.array([b for r in good for b in r["bootstrap_stats"]])
        else:
            if theta == 0.0:
                good = null_batch
            else:
                good, bad = _run_theta_batch(config, cfg_dict, theta,
                                             "stat_only", threads)
                failures_total.extend(bad)
            pooled = null_pool
        stats_arr = np.array([r["statistic"] for r in good])
        pvals = _pooled_pvalues(stats_arr, pooled)
        for alpha in config.alpha_levels:
            rejections = int((pvals <= alpha).sum())
            table.add(family, s_tag, alpha, theta, rejections, len(good))
    table.failures = failures_total
    return table


def run_size(config: ExperimentConfig, threads: int | None = None) -> PowerTable:
    """Rejection rates under the null (theta = 0)."""
    return run_power(replace(config, theta_grid=(0.0,)), threads)


def _epan_kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    sd = float(np.std(values))
    q75, q25 = np.percentile(values, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    h = max(spread, 1e-12) * values.size ** (-0.2)
    u = (grid[:, None] - values[None, :]) / h
    k = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return k.sum(axis=1) / (values.size * h)


def _ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    pooled = np.sort(np.concatenate([a, b]))
    cdf_a = np.searchsorted(np.sort(a), pooled, side="right") / a.size
    cdf_b = np.searchsorted(np.sort(b), pooled, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def run_bootstrap_density(config: ExperimentConfig,
                          threads: int | None = None) -> BootstrapDensityResult:
    """True statistic density vs pooled bootstrap density on a common grid."""
    threads = resolve_threads(threads if threads is not None else config.threads)
    pooled_cfg = replace(config, bootstrap_mode="pooled",
                         theta_grid=(config.model.theta,))
    cfg_dict = pooled_cfg.to_json_dict()
    payloads = [(cfg_dict, float(config.model.theta), rep, "pooled")
                for rep in range(config.mc_reps)]
    results = _parallel_map(_power_rep, payloads, threads)
    results.sort(key=lambda r: r["rep"])
    good = [r for r in results if r["ok"]]
    bad = len(results) - len(good)
    if bad > MAX_REP_FAILURE_FRAC * config.mc_reps:
        raise ReplicateFailureError(
            f"{bad} of {config.mc_reps} reps failed in bootstrap-density run")
    stats_arr = np.array([r["statistic"] for r in good])
    pooled = np.array([b for r in good for b in r["bootstrap_stats"]])
    lo = min(stats_arr.min(), pooled.min())
    hi = max(stats_arr.max(), pooled.max())
    pad = 0.05 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, 256)
    return BootstrapDensityResult(
        grid=grid,
        true_density=_epan_kde(stats_arr, grid),
        bootstrap_density=_epan_kde(pooled, grid),
        ks_distance=_ks_distance(stats_arr, pooled),
        statistic_values=stats_arr,
        bootstrap_values=pooled,
    )


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_manifest(config: ExperimentConfig, out_dir: str, extra: dict
                   | None = None) -> str:
    os.makedirs(out_dir, exist_ok=True)
    cfg = config.to_json_dict()
    blob = json.dumps(cfg, sort_keys=True).encode()
    manifest = {
        "config": cfg,
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "master_seed": config.master_seed,
        "package_version": __version__,
        "python_version": platform.python_version(),
    }
    manifest.update(extra or {})
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
