"""Command line entry point: ``rotamix simulate|fit|assess|predict``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

import rotamix
from rotamix import assessment as ma
from rotamix._backend import BACKEND
from rotamix.config import RunConfig
from rotamix.dataio import (
    PanelFormatError,
    default_truth,
    load_panel,
    simulate_panel,
    truth_frame,
    write_draws,
    read_draws,
    write_panel,
)
from rotamix.panel import PanelData
from rotamix.sampler import run_chain

log = logging.getLogger("rotamix")

# flag -> (section, key, type)
_FLAGS = {
    "m": (None, "m", int),
    "T": (None, "T", int),
    "a0": ("prior", "a0", float),
    "at": ("prior", "a_t", int),
    "q": ("prior", "q", int),
    "p": ("prior", "p", int),
    "s": ("prior", "s", int),
    "d": ("hyper", "d", float),
    "e": ("hyper", "e", float),
    "g": ("hyper", "g", float),
    "iters": ("mcmc", "iterations", int),
    "burnin": ("mcmc", "burn_in", int),
    "seed": ("mcmc", "seed", int),
    "theta_min": ("mcmc", "theta_min", float),
    "theta_max": ("mcmc", "theta_max", float),
    "batch_size": ("mcmc", "batch_size", int),
    "thin": ("mcmc", "thin", int),
    "chains": ("mcmc", "chains", int),
    "workers": ("mcmc", "workers", int),
    "fixed_component": ("mcmc", "fixed_component", str),
    "input": ("io", "input", str),
    "output": ("io", "output", str),
    "rank_scope": ("io", "rank_scope", str),
    "n_t": ("io", "n_t", int),
    "n_fit": ("io", "n_fit", int),
    "lps_from": ("io", "lps_from", int),
    "grid_n": ("io", "grid_n", int),
    "fit_dir": ("io", "fit_dir", str),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config or a previous run's manifest.json")
    for name, (_, _, typ) in _FLAGS.items():
        flag = "--" + name.replace("_", "-")
        p.add_argument(flag, dest=name, type=typ, default=None)
    p.add_argument("--rank-transform", dest="rank_transform", action="store_true", default=None,
                   help="rank-transform measurements even when columns are u1..um")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotamix", description=__doc__)
    parser.add_argument("--version", action="version", version=rotamix.__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("simulate", "sample a synthetic panel from the built-in time-varying truth"),
        ("fit", "run the Gibbs sampler and write draws, summaries and fit statistics"),
        ("assess", "LPML/WAIC of a fit and rolling log predictive scores"),
        ("predict", "train/test split, conditional prediction of u2 given u1 and MSE"),
    ]:
        _add_common(sub.add_parser(name, help=help_))
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for name, (section, key, _) in _FLAGS.items():
        value = getattr(args, name)
        if value is None:
            continue
        if name == "fixed_component":
            value = _parse_component(value, cfg.m)
        target = cfg if section is None else getattr(cfg, section)
        setattr(target, key, value)
    if args.rank_transform:
        cfg.io.rank_transform = True
    return cfg


def _parse_component(value: str, m: int):
    if value.lower() in ("none", ""):
        return None
    if set(value) <= {"0", "1"} and len(value) == m:
        return sum(int(b) << l for l, b in enumerate(value))
    return int(value)


def write_manifest(outdir: Path, command: str, cfg: RunConfig, extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "version": rotamix.__version__,
        "backend": BACKEND,
        "config": cfg.to_dict(),
    }
    if extra:
        doc.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_input(cfg: RunConfig) -> PanelData:
    if not cfg.io.input:
        raise SystemExit("error: --input is required")
    data = load_panel(cfg.io.input, rank=cfg.io.rank_transform, scope=cfg.io.rank_scope)
    if data.m != cfg.m:
        raise PanelFormatError(f"panel has m={data.m} but config says m={cfg.m}")
    return data


def _fit(cfg: RunConfig, data: PanelData):
    return run_chain(data, cfg.prior_config(data.T), cfg.lag_structure(data.T), cfg.mcmc_config())


def _label(cfg: RunConfig) -> str:
    if cfg.mcmc.fixed_component is not None:
        return "simple_clayton"
    return ma.model_label(cfg.prior.a_t, cfg.prior.q, cfg.prior.p)


def cmd_simulate(cfg: RunConfig, out: Path) -> None:
    if cfg.m != 2:
        raise SystemExit("error: the built-in simulation truth is bivariate (m=2)")
    T = cfg.T or 20
    cfg.T = T
    data, truth = simulate_panel(default_truth(T), cfg.io.n_t, cfg.mcmc.seed)
    write_panel(out / "panel.csv", data)
    truth_frame(truth).to_csv(out / "truth.csv", index=False)
    write_manifest(out, "simulate", cfg)
    log.info("wrote %d observations over T=%d to %s", data.n_obs, T, out)


def cmd_fit(cfg: RunConfig, out: Path) -> None:
    data = _load_input(cfg)
    cfg.T = data.T
    draws = _fit(cfg, data)
    write_draws(out, draws)
    ma.summarize(draws).to_csv(out / "summary.csv", index=False)
    ll = ma.loglik_matrix(draws, data)
    report = ma.GofReport(model=_label(cfg), lpml=ma.lpml_from_loglik(ll),
                          waic=ma.waic_from_loglik(ll))
    report.to_json(out / "gof.json")
    if cfg.io.grid_n > 0:
        pairs = [(a, b) for a in range(data.m) for b in range(a + 1, data.m)]
        frames = [ma.density_grid_frame(ma.density_grid(draws, t, pr, cfg.io.grid_n), t, pr)
                  for t in range(1, data.T + 1) for pr in pairs]
        pd.concat(frames).to_csv(out / "density_grid.csv", index=False)
    write_manifest(out, "fit", cfg)
    log.info("LPML %.3f  WAIC %.3f", report.lpml, report.waic)


def cmd_assess(cfg: RunConfig, out: Path) -> None:
    data = _load_input(cfg)
    cfg.T = data.T
    draws = read_draws(cfg.io.fit_dir) if cfg.io.fit_dir else _fit(cfg, data)
    ll = ma.loglik_matrix(draws, data)
    report = ma.GofReport(model=_label(cfg), lpml=ma.lpml_from_loglik(ll),
                          waic=ma.waic_from_loglik(ll))
    if cfg.io.lps_from is not None:
        s = int(cfg.io.lps_from)
        if not 1 <= s < data.T:
            raise SystemExit(f"error: --lps-from must be in [1, {data.T - 1}]")
        prior, lags = cfg.prior_config(data.T), cfg.lag_structure(data.T)
        rng = np.random.default_rng(np.random.SeedSequence([cfg.mcmc.seed, 1]))
        for t in range(s + 1, data.T + 1):
            past = data.first_times(t - 1)
            d_t = run_chain(past, prior.truncated(t - 1), lags.truncated(t - 1), cfg.mcmc_config())
            value = ma.lps(t, data, d_t, prior, lags, rng)
            report.lps.append({"t": t, "value": value})
            log.info("LPS(%d) = %.3f", t, value)
    report.to_json(out / "gof.json")
    write_manifest(out, "assess", cfg)


def cmd_predict(cfg: RunConfig, out: Path) -> None:
    if cfg.m != 2:
        raise SystemExit("error: predict supports m=2 only")
    data = _load_input(cfg)
    cfg.T = data.T
    if cfg.io.n_fit is None:
        raise SystemExit("error: --n-fit is required for predict")
    fit_data, test_data = data.split_per_time(int(cfg.io.n_fit))
    draws = _fit(cfg, fit_data)
    ll = ma.loglik_matrix(draws, fit_data)
    pred = ma.predict_conditional_means(draws, test_data)
    report = ma.GofReport(
        model=_label(cfg),
        lpml=ma.lpml_from_loglik(ll),
        waic=ma.waic_from_loglik(ll),
        mse=ma.predictive_mse(draws, fit_data, test_data),
    )
    pd.DataFrame({"t": test_data.t_idx + 1,
                  "id": test_data.ids if test_data.ids is not None else np.arange(test_data.n_obs),
                  "u1": test_data.u[:, 0], "u2": test_data.u[:, 1], "u2_hat": pred}) \
        .to_csv(out / "predictions.csv", index=False)
    write_draws(out, draws)
    report.to_json(out / "gof.json")
    write_manifest(out, "predict", cfg)
    log.info("MSE %.5f", report.mse)


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "assess": cmd_assess,
            "predict": cmd_predict}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.io.output)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](cfg, out)
    except (PanelFormatError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
