"""Command-line front-end: sample, diagnose, predict, calibrate.

Configuration comes from a JSON file (``--config``) with flag overrides;
flags win over file values. All artifacts are plain CSV/JSON with floats
written at 17 significant digits, and every command is deterministic given
(config, seed): re-runs produce byte-identical files.

Exit codes: 0 success, 1 configuration error, 2 model validation error,
3 sampling failure, 4 calibration failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .distributions import distribution_from_jsonable, distribution_to_jsonable
from .errors import (
    CalibrationError,
    DomainError,
    HistBayesError,
    ImproperPriorError,
    InitializationError,
    InsufficientDataError,
    MissingPriorError,
    NoFiniteThinningError,
    NonFiniteGradientError,
    SchemaError,
    ValidationError,
)
from .model import Posterior, build_parameter_space
from .predictive import calibration_run, posterior_predictive, prior_predictive
from .priors import UrPrior, build_priors
from .samplers import Chain, SamplerConfig, run_chains
from .workspace import ModifierKind, iter_parameters, parse_workspace

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_SAMPLING = 3
EXIT_CALIBRATION = 4

SEED_ENV_VAR = "HISTBAYES_SEED"
_UR_FAMILIES = ("normal", "gamma", "uniform")


class ConfigError(HistBayesError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


# ---------------------------------------------------------------------------
# configuration


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from e
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config file must contain a JSON object")
    return cfg


def _parse_scale(text: str):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError as e:
        raise ConfigError(f"bad --proposal-scale {text!r}: {e}") from e
    return parts[0] if len(parts) == 1 else tuple(parts)


def _resolve_seed(args, sampler_cfg: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in sampler_cfg:
        return int(sampler_cfg["seed"])
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from e
    return 0


def _sampler_config(args, config: dict) -> SamplerConfig:
    block = config.get("sampler", {})
    if not isinstance(block, dict):
        raise ConfigError("'sampler' config block must be an object")
    scale = block.get("proposal_scale", 0.5)
    if isinstance(scale, list):
        scale = tuple(float(s) for s in scale)
    if getattr(args, "proposal_scale", None) is not None:
        scale = _parse_scale(args.proposal_scale)
    try:
        return SamplerConfig(
            kind=getattr(args, "sampler", None) or block.get("kind", "hmc"),
            n_draws=(args.draws if getattr(args, "draws", None) is not None
                     else int(block.get("draws", 1000))),
            n_warmup=(args.warmup if getattr(args, "warmup", None) is not None
                      else int(block.get("warmup", 500))),
            n_chains=(args.chains if getattr(args, "chains", None) is not None
                      else int(block.get("chains", 1))),
            seed=_resolve_seed(args, block),
            step_size=(args.step_size if getattr(args, "step_size", None) is not None
                       else float(block.get("step_size", 0.1))),
            n_leapfrog=(args.leapfrog_steps
                        if getattr(args, "leapfrog_steps", None) is not None
                        else int(block.get("leapfrog_steps", 20))),
            proposal_scale=scale,
        )
    except (TypeError, ValueError, DomainError) as e:
        raise ConfigError(f"bad sampler configuration: {e}") from e


def _build_model(args, config: dict):
    """Parse the workspace and resolve priors + parameter space."""
    ws_path = getattr(args, "workspace", None) or config.get("workspace")
    if not ws_path:
        raise ConfigError("no workspace file: pass --workspace or set 'workspace' in config")
    try:
        text = Path(ws_path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read workspace file: {e}") from e
    spec, obs = parse_workspace(text)

    free_names = {name for name, kind, _, _ in iter_parameters(spec)
                  if kind is ModifierKind.FREE_NORM}
    poisson_bases = {m.parameter for _, kind, m, _ in iter_parameters(spec)
                     if kind is ModifierKind.POISSON_CONSTRAINED_SHAPE}
    ur: list[UrPrior] = []
    overrides = {}
    priors_cfg = config.get("priors", {})
    if not isinstance(priors_cfg, dict):
        raise ConfigError("'priors' config block must be an object")
    for name, entry in priors_cfg.items():
        if not isinstance(entry, dict):
            raise ConfigError(f"prior for '{name}' must be an object")
        if set(entry) == {"ur"}:
            ur.append(_ur_prior(name, entry["ur"]))
        elif name in free_names or name in poisson_bases:
            ur.append(_ur_prior(name, entry))
        else:
            try:
                overrides[name] = distribution_from_jsonable(entry)
            except DomainError as e:
                raise ConfigError(f"bad prior override for '{name}': {e}") from e

    priors = build_priors(spec, ur, obs, overrides=overrides)
    space = build_parameter_space(spec, priors)
    return spec, obs, priors, space


def _ur_prior(name: str, obj) -> UrPrior:
    if not (isinstance(obj, dict) and len(obj) == 1):
        raise ConfigError(f"ur-prior for '{name}' must be a one-key distribution object")
    family, params = next(iter(obj.items()))
    if family not in _UR_FAMILIES:
        raise ConfigError(f"ur-prior for '{name}': unknown family {family!r}")
    if not (isinstance(params, list) and len(params) == 2):
        raise ConfigError(f"ur-prior for '{name}': need two hyperparameters")
    try:
        return UrPrior(parameter=name, family=family,
                       params=(float(params[0]), float(params[1])))
    except DomainError as e:
        raise ConfigError(str(e)) from e


def _out_dir(args, config: dict) -> Path:
    out = getattr(args, "out", None) or config.get("out", "histbayes_out")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# artifact writers / readers


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _write_chains_csv(path: Path, chains: list[Chain]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["chain", "draw", *chains[0].param_names])
        for chain in chains:
            for d in range(chain.n_draws):
                writer.writerow([chain.chain_index, d,
                                 *(_fmt(v) for v in chain.draws[d])])


def _read_chains_csv(path: Path) -> list[Chain]:
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[:2] != ["chain", "draw"] or len(header) < 3:
                raise ConfigError(
                    f"{path}: expected header 'chain,draw,<parameters...>'")
            names = tuple(header[2:])
            rows_by_chain: dict[int, list[list[float]]] = {}
            for row in reader:
                if len(row) != len(header):
                    raise ConfigError(f"{path}: row with {len(row)} fields, "
                                      f"expected {len(header)}")
                rows_by_chain.setdefault(int(row[0]), []).append(
                    [float(v) for v in row[2:]])
    except OSError as e:
        raise ConfigError(f"cannot read chains file: {e}") from e
    except ValueError as e:
        raise ConfigError(f"{path}: malformed value: {e}") from e
    if not rows_by_chain:
        raise ConfigError(f"{path}: no draws found")
    return [Chain(draws=np.asarray(rows_by_chain[idx]), param_names=names,
                  acceptance_rate=float("nan"), divergence_count=0, seed=0,
                  thinning_applied=1, chain_index=idx)
            for idx in sorted(rows_by_chain)]


def _priors_jsonable(priors) -> dict:
    return {name: distribution_to_jsonable(dist) for name, dist in priors.items()}


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    try:
        config = _load_config(args.config)
        cfg = _sampler_config(args, config)
        out = _out_dir(args, config)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    try:
        spec, obs, priors, space = _build_model(args, config)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    except MissingPriorError as e:
        return _fail(EXIT_CONFIG, str(e))
    except (json.JSONDecodeError, SchemaError, ValidationError, DomainError,
            ImproperPriorError) as e:
        return _fail(EXIT_VALIDATION, str(e))

    target = Posterior(spec, priors, obs, space=space).as_target()
    try:
        chains = run_chains(target, cfg)
    except (InitializationError, NonFiniteGradientError, HistBayesError) as e:
        return _fail(EXIT_SAMPLING, f"sampling failed: {e}")

    _write_chains_csv(out / "chains.csv", chains)
    _write_json(out / "chains_meta.json", {
        "seed": cfg.seed,
        "sampler": {
            "kind": cfg.kind, "draws": cfg.n_draws, "warmup": cfg.n_warmup,
            "chains": cfg.n_chains, "step_size": cfg.step_size,
            "leapfrog_steps": cfg.n_leapfrog,
            "proposal_scale": (list(cfg.proposal_scale)
                               if isinstance(cfg.proposal_scale, tuple)
                               else cfg.proposal_scale),
        },
        "parameters": list(space.names),
        "chains": [
            {"index": c.chain_index, "acceptance_rate": c.acceptance_rate,
             "divergence_count": c.divergence_count,
             "thinning_applied": c.thinning_applied}
            for c in chains
        ],
    })
    _write_json(out / "priors_resolved.json", _priors_jsonable(priors))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    try:
        config = _load_config(args.config)
        out = _out_dir(args, config)
        chains = _read_chains_csv(Path(args.chains_csv))
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    band = args.thin_band if args.thin_band is not None else float(
        config.get("thin_band", diag.DEFAULT_THRESHOLD_BAND))

    names = chains[0].param_names
    report: dict[str, dict] = {}
    acf_rows: list[tuple] = []
    try:
        for name in names:
            thin_factor = max(diag.required_thinning(c, band, parameter=name)
                              for c in chains)
            ess = sum(diag.effective_sample_size(c, name) for c in chains)
            rhat = (diag.split_rhat(chains, name) if len(chains) >= 2 else None)
            lead = chains[0]
            max_lag = min(20, lead.n_draws - 1)
            raw = diag.autocorrelation(lead, name, max_lag, threshold_band=band)
            thinned_chain = diag.thin(lead, thin_factor)
            t_lag = min(max_lag, thinned_chain.n_draws - 1)
            thinned = diag.autocorrelation(thinned_chain, name, t_lag,
                                           threshold_band=band)
            report[name] = {
                "ess": ess,
                "rhat": rhat,
                "required_thinning": thin_factor,
                "first_lag_within_band": raw.first_lag_within_band,
            }
            for lag in range(max_lag + 1):
                acf_rows.append((name, lag, raw.acf[lag],
                                 thinned.acf[lag] if lag <= t_lag else ""))
    except (InsufficientDataError, NoFiniteThinningError, DomainError) as e:
        return _fail(EXIT_CONFIG, str(e))

    _write_json(out / "diagnostics.json", {
        "threshold_band": band,
        "n_chains": len(chains),
        "n_draws": chains[0].n_draws,
        "parameters": report,
    })
    with (out / "acf.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "lag", "acf_raw", "acf_thinned"])
        for name, lag, raw_v, thin_v in acf_rows:
            writer.writerow([name, lag, _fmt(raw_v),
                             _fmt(thin_v) if thin_v != "" else ""])
    return EXIT_OK


def cmd_predict(args) -> int:
    try:
        config = _load_config(args.config)
        out = _out_dir(args, config)
        if args.kind == "posterior" and args.chains_csv is None:
            raise ConfigError("posterior predictive requires a chains.csv argument")
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    try:
        spec, obs, priors, space = _build_model(args, config)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    except MissingPriorError as e:
        return _fail(EXIT_CONFIG, str(e))
    except (json.JSONDecodeError, SchemaError, ValidationError, DomainError,
            ImproperPriorError) as e:
        return _fail(EXIT_VALIDATION, str(e))

    seed = _resolve_seed(args, config.get("sampler", {}))
    n_draws = args.draws if args.draws is not None else int(
        config.get("predict_draws", 1000))
    try:
        if args.kind == "prior":
            samples = prior_predictive(spec, priors, n_draws, seed, space=space)
        else:
            chains = _read_chains_csv(Path(args.chains_csv))
            draws = np.concatenate([c.draws for c in chains], axis=0)
            merged = Chain(draws=draws, param_names=chains[0].param_names,
                           acceptance_rate=float("nan"), divergence_count=0,
                           seed=seed)
            samples = posterior_predictive(spec, merged, seed)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    except HistBayesError as e:
        return _fail(EXIT_SAMPLING, f"predictive sampling failed: {e}")

    with (out / "predictive.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "channel", "bin", "count"])
        for name, counts in samples.counts.items():
            for d in range(counts.shape[0]):
                for b in range(counts.shape[1]):
                    writer.writerow([d, name, b, int(counts[d, b])])

    summary = {"kind": samples.kind, "n_draws": samples.n_draws, "channels": {}}
    for name, counts in samples.counts.items():
        per_bin = []
        for b in range(counts.shape[1]):
            col = counts[:, b]
            entry = {"bin": b, "mean": float(np.mean(col))}
            for level in (68, 95, 99):
                q = (1.0 - level / 100.0) / 2.0
                entry[f"interval{level}"] = [float(np.quantile(col, q)),
                                             float(np.quantile(col, 1.0 - q))]
            per_bin.append(entry)
        summary["channels"][name] = per_bin
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        config = _load_config(args.config)
        cfg = _sampler_config(args, config)
        out = _out_dir(args, config)
        n_pseudo = args.n_pseudo if args.n_pseudo is not None else int(
            config.get("n_pseudo", 300))
        if n_pseudo < 100:
            raise ConfigError(f"n-pseudo below minimum: {n_pseudo} < 100")
        per_exp = (args.draws_per_experiment
                   if args.draws_per_experiment is not None
                   else int(config.get("calibration_draws_per_experiment", 63)))
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    try:
        spec, obs, priors, space = _build_model(args, config)
    except ConfigError as e:
        return _fail(EXIT_CONFIG, str(e))
    except MissingPriorError as e:
        return _fail(EXIT_CONFIG, str(e))
    except (json.JSONDecodeError, SchemaError, ValidationError, DomainError,
            ImproperPriorError) as e:
        return _fail(EXIT_VALIDATION, str(e))

    try:
        result = calibration_run(spec, priors, n_pseudo, cfg,
                                 draws_per_experiment=per_exp,
                                 seed=cfg.seed, space=space)
    except CalibrationError as e:
        return _fail(EXIT_SAMPLING, str(e))
    except HistBayesError as e:
        return _fail(EXIT_SAMPLING, f"calibration sampling failed: {e}")

    _write_json(out / "calibration.json", {
        "n_pseudo": result.n_pseudo,
        "draws_per_experiment": result.draws_per_experiment,
        "n_failed": result.n_failed,
        "seed": result.seed,
        "parameters": result.comparison,
        "passed": result.passed(),
    })
    with (out / "ranks.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "experiment", "rank"])
        for name in result.param_names:
            for i, r in enumerate(result.rank_statistics[name]):
                writer.writerow([name, i, int(r)])
    with (out / "pooled.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", *result.param_names])
        for row in result.aggregated_posterior_draws:
            writer.writerow(["posterior", *(_fmt(v) for v in row)])
        for row in result.prior_reference_draws:
            writer.writerow(["prior", *(_fmt(v) for v in row)])

    if not result.passed():
        failing = [name for name, c in result.comparison.items()
                   if not c["chi2_pvalue"] > 0.01]
        return _fail(EXIT_CALIBRATION,
                     f"calibration failure: rank uniformity rejected for {failing}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--workspace", help="JSON workspace file (overrides config)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config and env)")
    p.add_argument("--out", help="output directory")


def _add_sampler_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sampler", choices=["hmc", "mh"], help="sampler kind")
    p.add_argument("--draws", type=int, help="post-warmup draws per chain")
    p.add_argument("--warmup", type=int, help="warmup draws to discard")
    p.add_argument("--chains", type=int, help="number of chains")
    p.add_argument("--step-size", dest="step_size", type=float,
                   help="HMC leapfrog step size")
    p.add_argument("--leapfrog-steps", dest="leapfrog_steps", type=int,
                   help="HMC leapfrog steps per trajectory")
    p.add_argument("--proposal-scale", dest="proposal_scale",
                   help="MH proposal scale (single value or comma list)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="histbayes",
        description="Bayesian evaluation of multi-channel binned counting models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw posterior chains")
    _add_common(p)
    _add_sampler_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("diagnose", help="chain diagnostics from a chains.csv")
    p.add_argument("chains_csv", help="chains.csv produced by 'sample'")
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--thin-band", dest="thin_band", type=float,
                   help="acceptable |acf| band (default 0.1)")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("predict", help="prior or posterior predictive samples")
    p.add_argument("chains_csv", nargs="?", default=None,
                   help="chains.csv (required for --kind posterior)")
    _add_common(p)
    p.add_argument("--kind", choices=["prior", "posterior"], required=True)
    p.add_argument("--draws", type=int, help="number of prior predictive draws")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="posterior calibration check")
    _add_common(p)
    _add_sampler_flags(p)
    p.add_argument("--n-pseudo", dest="n_pseudo", type=int,
                   help="number of pseudo-experiments (>= 100)")
    p.add_argument("--draws-per-experiment", dest="draws_per_experiment", type=int,
                   help="posterior draws kept per pseudo-experiment")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
