"""Command-line interface.

Exit codes: 0 success, 2 malformed config/arguments, 3 aggregated
numerical failure during an experiment.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace

import click
import numpy as np

from .bandwidth import BandwidthRule, select_bandwidths
from .bootstrap import bootstrap_null
from .errors import ConfigError, MarkovgateError
from .estimators import TripleSample
from .harness import (ExperimentConfig, load_config, paper_scale,
                      resolve_threads, run_bootstrap_density, run_power,
                      run_size, write_manifest)
from .models import ModelSpec, Path, SimConfig, simulate
from .stats import compute_statistic
from .weights import WeightSpec

_MODEL_ALIASES = {
    "ou": "ou_null", "ou_null": "ou_null",
    "h1": "h1_stochastic_level", "h1_stochastic_level": "h1_stochastic_level",
    "h2": "h2_stochastic_vol", "h2_stochastic_vol": "h2_stochastic_vol",
    "h3": "h3_jumps", "h3_jumps": "h3_jumps",
}


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Markov-hypothesis testing via Chapman-Kolmogorov discrepancies."""


@main.command()
@click.option("--model", "model_name", default="ou", show_default=True,
              type=click.Choice(sorted(_MODEL_ALIASES)), help="Model family.")
@click.option("--n", "n_obs", default=1200, show_default=True, type=int)
@click.option("--delta", default=1.0 / 52.0, show_default=True, type=float)
@click.option("--substeps", default=20, show_default=True, type=int)
@click.option("--burn-in", default=500, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--theta", default=0.0, show_default=True, type=float)
@click.option("--s-scale", default=10.0, show_default=True, type=float)
@click.option("--jump-type", default="gaussian_iid", show_default=True,
              type=click.Choice(["gaussian_iid", "cir_driven"]))
@click.option("--kappa", default=0.2, show_default=True, type=float)
@click.option("--alpha", default=0.085, show_default=True, type=float)
@click.option("--sigma", default=0.08, show_default=True, type=float)
@click.option("--out", "out_path", default="-", show_default=True,
              help="Output CSV path, or - for stdout.")
def simulate_cmd(model_name, n_obs, delta, substeps, burn_in, seed, theta,
                 s_scale, jump_type, kappa, alpha, sigma, out_path) -> None:
    """Simulate one path and write it as index,time,value CSV."""
    try:
        model = ModelSpec(variant=_MODEL_ALIASES[model_name], kappa=kappa,
                          alpha=alpha, sigma=sigma, theta=theta,
                          s_scale=s_scale, jump_type=jump_type)
        config = SimConfig(n_obs=n_obs, delta=delta, substeps=substeps,
                           burn_in=burn_in, seed=seed)
    except ValueError as exc:
        _fail(2, str(exc))
    path = simulate(model, config)
    if out_path == "-":
        sys.stdout.write(path.to_csv_text())
    else:
        path.to_csv(out_path)
        click.echo(f"wrote {out_path}")


main.add_command(simulate_cmd, name="simulate")


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--statistic", default="t1_star", show_default=True,
              type=click.Choice(["t0", "t1", "t1_star", "t2"]))
@click.option("--bootstrap", "bootstrap_b", default=0, show_default=True,
              type=int, help="Bootstrap replicates (0 disables).")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--trim", default=0.05, show_default=True, type=float)
@click.option("--taper", default=0.1, show_default=True, type=float)
@click.option("--c-scale", default=1.0, show_default=True, type=float)
@click.option("--kernel", default="epanechnikov", show_default=True,
              type=click.Choice(["epanechnikov", "quartic", "triweight"]))
@click.option("--no-plugin", is_flag=True,
              help="Skip the plug-in asymptotic calibration.")
@click.option("--out", "out_path", default=None,
              help="Also write the report as a one-row CSV.")
def test(input_path, statistic, bootstrap_b, seed, trim, taper, c_scale,
         kernel, no_plugin, out_path) -> None:
    """Run one Markov test on a CSV path (columns index,time,value)."""
    try:
        path = Path.from_csv(input_path)
        sample = TripleSample.from_path(path.values, path.delta)
        target = "t2" if statistic == "t2" else "t1_family"
        bw = select_bandwidths(BandwidthRule(c_scale=c_scale), sample, target)
        kind = {"t0": "ratio_weight", "t1": "density_weight",
                "t1_star": "ratio_weight", "t2": "x_only_weight"}[statistic]
        weight = WeightSpec(kind=kind, trim_quantile=trim, smoothness=taper)
    except (ValueError, ConfigError) as exc:
        _fail(2, str(exc))
    try:
        boot = None
        if bootstrap_b > 0:
            boot = bootstrap_null(path, statistic, bw, bootstrap_b, seed,
                                  weight=weight, kernel_w=kernel,
                                  kernel_k=kernel)
        report = compute_statistic(
            statistic, sample, bw, weight, kernel_w=kernel, kernel_k=kernel,
            calibration="none" if (no_plugin or statistic == "t0") else "plugin",
            bootstrap_distribution=boot)
    except MarkovgateError as exc:
        _fail(3, str(exc))
    click.echo(f"statistic       {statistic}")
    click.echo(f"value           {report.statistic!r}")
    click.echo(f"n_used          {report.n_used}")
    click.echo(f"bandwidths      b1={bw.b1:g} b2={bw.b2:g} h1={bw.h1:g} "
               f"h2={bw.h2:g} h3={bw.h3:g}")
    for label, attr in (("plug-in mean", "mu"), ("plug-in sd", "sigma"),
                        ("z-score", "z_score"), ("p (normal)", "p_normal"),
                        ("chi2 scale r", "r_scale"), ("chi2 dof", "dof"),
                        ("p (chi2)", "p_chisq"), ("p (bootstrap)", "p_bootstrap")):
        val = getattr(report, attr)
        if val is not None:
            click.echo(f"{label:<15} {val!r}")
    for key, val in sorted(report.diagnostics.items()):
        click.echo(f"{key:<15} {val}")
    if out_path:
        row = report.to_row()
        keys = list(row)
        with open(out_path, "w") as fh:
            fh.write(",".join(keys) + "\n")
            fh.write(",".join("" if row[k] is None else repr(row[k])
                              if isinstance(row[k], float) else str(row[k])
                              for k in keys) + "\n")
        click.echo(f"wrote {out_path}")


def _run_experiment(config_path, use_paper_scale, seed, output_dir, runner,
                    csv_name):
    try:
        config = load_config(config_path)
        if use_paper_scale:
            config = paper_scale(config)
        if seed is not None:
            config = replace(config, master_seed=seed)
        if output_dir is not None:
            config = replace(config, output_dir=output_dir)
    except ConfigError as exc:
        _fail(2, str(exc))
    threads = resolve_threads(config.threads)
    try:
        result = runner(config, threads)
    except MarkovgateError as exc:
        _fail(3, str(exc))
    out_dir = config.output_dir
    os.makedirs(out_dir, exist_ok=True)
    return config, result, out_dir


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--paper-scale", is_flag=True,
              help="n=2400, 1000 reps, pooled-3 bootstrap.")
@click.option("--seed", default=None, type=int, help="Override master seed.")
@click.option("--output-dir", default=None)
def size(config_path, paper_scale, seed, output_dir) -> None:
    """Monte Carlo size of the test under the null (theta = 0)."""
    config, table, out_dir = _run_experiment(
        config_path, paper_scale, seed, output_dir, run_size, "size.csv")
    csv_path = os.path.join(out_dir, "size.csv")
    with open(csv_path, "w") as fh:
        fh.write(table.to_csv_text())
    write_manifest(config, out_dir, {"command": "size",
                                     "rep_failures": len(table.failures)})
    click.echo(f"wrote {csv_path}")
    for row in table.rows:
        click.echo(f"alpha={row['alpha']:g} rate={row['rate']:.4f} "
                   f"se={row['se']:.4f} reps={row['reps']}")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--paper-scale", is_flag=True)
@click.option("--seed", default=None, type=int)
@click.option("--output-dir", default=None)
def power(config_path, paper_scale, seed, output_dir) -> None:
    """Monte Carlo power table over the configured theta grid."""
    config, table, out_dir = _run_experiment(
        config_path, paper_scale, seed, output_dir, run_power, "power.csv")
    csv_path = os.path.join(out_dir, "power.csv")
    with open(csv_path, "w") as fh:
        fh.write(table.to_csv_text())
    write_manifest(config, out_dir, {"command": "power",
                                     "rep_failures": len(table.failures)})
    click.echo(f"wrote {csv_path}")
    for row in table.rows:
        click.echo(f"theta={row['theta']:g} alpha={row['alpha']:g} "
                   f"rate={row['rate']:.4f} se={row['se']:.4f}")


@main.command(name="bootstrap-density")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--paper-scale", is_flag=True)
@click.option("--seed", default=None, type=int)
@click.option("--output-dir", default=None)
def bootstrap_density(config_path, paper_scale, seed, output_dir) -> None:
    """True vs pooled-bootstrap statistic density curves and KS distance."""
    config, result, out_dir = _run_experiment(
        config_path, paper_scale, seed, output_dir,
        run_bootstrap_density, "bootstrap_density.csv")
    csv_path = os.path.join(out_dir, "bootstrap_density.csv")
    with open(csv_path, "w") as fh:
        fh.write(result.to_csv_text())
    summary_path = os.path.join(out_dir, "bootstrap_density_summary.json")
    with open(summary_path, "w") as fh:
        json.dump({"ks_distance": result.ks_distance,
                   "n_statistics": int(result.statistic_values.size),
                   "n_bootstrap": int(result.bootstrap_values.size)},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_manifest(config, out_dir, {"command": "bootstrap-density"})
    click.echo(f"wrote {csv_path}")
    click.echo(f"ks_distance {result.ks_distance!r}")


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--target", default="t1_family", show_default=True,
              type=click.Choice(["t1_family", "t2"]))
@click.option("--c-scale", default=1.0, show_default=True, type=float)
@click.option("--rule", default="empirical_rule", show_default=True,
              type=click.Choice(["empirical_rule", "cv"]))
def bandwidth(input_path, target, c_scale, rule) -> None:
    """Print the selected bandwidths for a CSV path."""
    try:
        path = Path.from_csv(input_path)
        sample = TripleSample.from_path(path.values, path.delta)
        bw = select_bandwidths(BandwidthRule(kind=rule, c_scale=c_scale),
                               sample, target)
    except (ValueError, MarkovgateError) as exc:
        _fail(2, str(exc))
    for name in ("b1", "b2", "h1", "h2", "h3"):
        click.echo(f"{name} {getattr(bw, name)!r}")


if __name__ == "__main__":
    main()
