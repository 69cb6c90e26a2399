"""Command-line front end for the CPTP channel sampler.

Subcommands:
- simulate: draw tomography counts from a named channel
- sample: HMC draws from a channel family under a prior (or posterior)
- regions: size/credibility curves of bounded-likelihood error regions
- marginal: marginal likelihood of a channel property
- model-select: AIC, BIC and relative belief ratios over the nested qubit families

Every command writes its tables and a manifest.json into --out; `--manifest <file>` reruns a
recorded configuration.
"""

import argparse
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from dotenv import load_dotenv

from channels.catalog import parse_channel_spec
from channels.duality import born_probabilities, validate_choi
from channels.families import NESTED_FAMILIES, get_family
from inference.marginal import MarginalConfig, get_property, marginal_likelihood
from inference.model_select import assess_criteria, sample_family, select_model
from inference.regions import blr_curves, containment_report
from sampling.hmc import ACCEPTANCE_BAND
from services.config_manager import ConfigManager, RunConfig, get_config_manager, get_settings
from services.results_writer import ResultsWriter
from services.sampling_service import get_channel_sampler
from tomography.likelihood import (
    CountsData,
    log_likelihood,
    parse_prior_spec,
    read_counts_csv,
    simulate_counts,
    write_counts_csv,
)
from tomography.mle import max_log_likelihood
from tomography.schemes import TomographyScheme, load_scheme
from utils.errors import ConfigError, NumericalError
from utils.logging_config import get_logger, setup_logging

load_dotenv()

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SPOT_CHECK_EVERY = 100

# CLI option dest -> RunConfig field
OVERRIDE_FIELDS = (
    "seed",
    "chains",
    "draws",
    "burn_in",
    "step_size",
    "leapfrog_steps",
    "family",
    "prior",
    "property_name",
    "scale",
    "out",
    "scheme",
    "counts",
    "channel",
    "copies",
    "truth",
    "restarts",
    "n_channels",
    "n_values",
    "iterations",
)


# ============================================================================
# ARGUMENT PARSING
# ============================================================================


def _step_size(text: str):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"step size must be 'auto' or a number, got '{text}'") from e


def _common_options() -> argparse.ArgumentParser:
    # Unset options stay out of the namespace; subcommand parsers share these flags with the top level
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="Run seed")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--scale", choices=["desk", "paper"], help="Sample-size preset")
    common.add_argument("--scheme", help="Scheme name (tetrahedron, qutrit-sic) or JSON file")
    common.add_argument("--log-level", dest="log_level", help="Logging level")
    return common


def _sampler_options() -> argparse.ArgumentParser:
    options = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    options.add_argument("--draws", type=int, help="Kept draws per sample (overrides the scale preset)")
    options.add_argument("--chains", type=int, help="Independent chains per sample")
    options.add_argument("--burn-in", dest="burn_in", type=int, help="Burn-in iterations")
    options.add_argument("--step-size", dest="step_size", type=_step_size, help="Leapfrog step size or 'auto'")
    options.add_argument("--leapfrog-steps", dest="leapfrog_steps", type=int, help="Leapfrog steps per trajectory")
    options.add_argument("--prior", help="primitive | conjugate:beta=48,ref=<channel spec>")
    return options


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with all subcommands."""
    common = _common_options()
    sampler = _sampler_options()

    parser = argparse.ArgumentParser(
        prog="cptp-sampler",
        description="Sample CPTP channels with Hamiltonian Monte Carlo and run Bayesian tomography inference.",
        parents=[common],
    )
    parser.add_argument("--manifest", help="Rerun the configuration recorded in a manifest.json")
    subparsers = parser.add_subparsers(dest="command")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Simulate tomography counts")
    simulate.add_argument("--channel", default=argparse.SUPPRESS, help="Channel spec or JSON file")
    simulate.add_argument(
        "--copies", type=int, nargs="+", default=argparse.SUPPRESS, help="Copies per input (one value or one per input)"
    )

    sample = subparsers.add_parser("sample", parents=[common, sampler], help="Sample a channel family")
    sample.add_argument("--family", default=argparse.SUPPRESS, choices=list(NESTED_FAMILIES))
    sample.add_argument("--counts", default=argparse.SUPPRESS, help="Counts CSV (samples the posterior)")

    regions = subparsers.add_parser("regions", parents=[common, sampler], help="Error-region curves")
    regions.add_argument("--counts", default=argparse.SUPPRESS, help="Counts CSV")
    regions.add_argument("--family", default=argparse.SUPPRESS, choices=list(NESTED_FAMILIES))
    regions.add_argument("--truth", default=argparse.SUPPRESS, help="Channel spec checked for BLR containment")
    regions.add_argument("--restarts", type=int, default=argparse.SUPPRESS, help="MLE restarts")

    marginal = subparsers.add_parser("marginal", parents=[common, sampler], help="Marginal likelihood of a property")
    marginal.add_argument("--counts", default=argparse.SUPPRESS, help="Counts CSV")
    marginal.add_argument("--family", default=argparse.SUPPRESS, choices=list(NESTED_FAMILIES))
    marginal.add_argument(
        "--property", dest="property_name", default=argparse.SUPPRESS, choices=["avg-fidelity", "min-fidelity"]
    )
    marginal.add_argument("--iterations", type=int, default=argparse.SUPPRESS, help="Reweighting rounds")

    model = subparsers.add_parser("model-select", parents=[common, sampler], help="Select among nested families")
    model.add_argument("--counts", default=argparse.SUPPRESS, help="Counts CSV")
    model.add_argument("--channel", default=argparse.SUPPRESS, help="Simulate data from this channel instead")
    model.add_argument("--copies", type=int, nargs="+", default=argparse.SUPPRESS, help="Copies per input")
    model.add_argument("--restarts", type=int, default=argparse.SUPPRESS, help="MLE restarts")
    model.add_argument(
        "--n-channels", dest="n_channels", type=int, default=argparse.SUPPRESS, help="Channels per family (assessment)"
    )
    model.add_argument(
        "--n-values", dest="n_values", type=int, nargs="+", default=argparse.SUPPRESS, help="Total copies (assessment)"
    )

    return parser


def config_from_args(args: argparse.Namespace, manager: ConfigManager) -> RunConfig:
    """
    Build the validated run configuration from CLI arguments or a manifest.

    Raises:
        ConfigError: If no command is given or the configuration is invalid
    """
    manifest = getattr(args, "manifest", None)
    if manifest:
        config = manager.from_manifest(manifest)
        if getattr(args, "out", None):
            config = config.model_copy(update={"out": args.out})
        if config.command is None:
            raise ConfigError(f"Manifest {manifest} does not record a command")
        return config
    if not args.command:
        raise ConfigError("A subcommand (simulate, sample, regions, marginal, model-select) or --manifest is required")
    overrides: Dict[str, Any] = {name: getattr(args, name, None) for name in OVERRIDE_FIELDS}
    overrides["command"] = args.command
    return manager.load(overrides)


# ============================================================================
# SHARED INPUTS
# ============================================================================


def _require(value: Optional[Any], flag: str, command: str) -> Any:
    if value is None:
        raise ConfigError(f"'{command}' needs {flag}")
    return value


def _load_counts(config: RunConfig, scheme: TomographyScheme) -> CountsData:
    counts = read_counts_csv(_require(config.counts, "--counts", config.command))
    try:
        counts.check_scheme(scheme)
    except ValueError as e:
        raise ConfigError(f"Counts {config.counts} do not fit scheme '{scheme.name}': {e}") from e
    logger.info(f"Loaded {counts.total} counts from {config.counts}")
    return counts


def _copies(config: RunConfig, scheme: TomographyScheme):
    copies = _require(config.copies, "--copies", config.command)
    if len(copies) not in (1, scheme.n_inputs):
        raise ConfigError(f"--copies needs 1 or {scheme.n_inputs} values, got {len(copies)}")
    return copies[0] if len(copies) == 1 else copies


# ============================================================================
# COMMANDS
# ============================================================================


def cmd_simulate(config: RunConfig, manager: ConfigManager, writer: ResultsWriter) -> Dict[str, Any]:
    """Simulate counts from a channel and write counts.csv."""
    scheme = load_scheme(config.scheme)
    rho = parse_channel_spec(_require(config.channel, "--channel", "simulate"))
    counts = simulate_counts(rho, scheme, _copies(config, scheme), config.seed)
    write_counts_csv(counts, writer.path("counts.csv"))
    writer.written.append("counts.csv")
    print(f"Total counts: {counts.total}")
    return {"total": counts.total}


def cmd_sample(config: RunConfig, manager: ConfigManager, writer: ResultsWriter) -> Dict[str, Any]:
    """Sample a family and write chain.csv with a summary JSON."""
    scheme = load_scheme(config.scheme)
    family = get_family(config.family, scheme.dim)
    prior = parse_prior_spec(config.prior, scheme)
    counts = _load_counts(config, scheme) if config.counts else None
    draws = manager.resolve_draws(config, manager.profile(config).sample_draws)

    sample = get_channel_sampler().sample(
        family, scheme, prior, manager.hmc_config(config, draws), counts=counts, chains=config.chains
    )

    validated = 0
    for index in range(0, sample.size, SPOT_CHECK_EVERY):
        validate_choi(sample.chois(np.array([index]))[0])
        validated += 1

    log_l = sample.log_likelihood(counts) if counts is not None else None
    frame = sample.to_frame(log_l)
    if "log_w" in sample.metadata:
        frame["log_w"] = sample.metadata["log_w"]
    writer.write_csv("chain.csv", frame)

    acceptance = sample.acceptance
    if acceptance is not None and not ACCEPTANCE_BAND[0] <= acceptance <= ACCEPTANCE_BAND[1]:
        logger.warning(f"Acceptance rate {acceptance:.3f} is outside {list(ACCEPTANCE_BAND)}")
    summary = {
        "family": family.name,
        "dim": family.dim,
        "n_params": family.n_params,
        "draws": sample.size,
        "acceptance": acceptance,
        "ess": sample.ess,
        "step_size": sample.metadata.get("step_size"),
        "validated_draws": validated,
        "target": "posterior" if counts is not None else "prior",
    }
    writer.write_json("sample_summary.json", summary)
    return summary


def cmd_regions(config: RunConfig, manager: ConfigManager, writer: ResultsWriter) -> Dict[str, Any]:
    """Prior and posterior samples, log L_max and the BLR size/credibility curves."""
    scheme = load_scheme(config.scheme)
    counts = _load_counts(config, scheme)
    family = get_family(config.family, scheme.dim)
    prior = parse_prior_spec(config.prior, scheme)
    profile = manager.profile(config)
    draws = manager.resolve_draws(config, profile.regions_draws.get(scheme.dim, min(profile.regions_draws.values())))
    sampler = get_channel_sampler()

    prior_sample = sampler.sample(
        family, scheme, prior, manager.hmc_config(config, draws, seed_offset=0), chains=config.chains
    )
    posterior_sample = sampler.sample(
        family, scheme, prior, manager.hmc_config(config, draws, seed_offset=1), counts=counts, chains=config.chains
    )

    # Refine from the best sampled point so L_max is never below a sampled likelihood
    posterior_ll = posterior_sample.log_likelihood(counts)
    best = posterior_sample.params[int(np.argmax(posterior_ll))]
    mle = max_log_likelihood(
        counts,
        scheme,
        family,
        restarts=config.restarts,
        seed=config.seed,
        extra_starts=[best],
        max_workers=get_settings().max_workers,
    )

    curves = blr_curves(prior_sample, posterior_sample, counts, mle.log_lmax)
    writer.write_csv("regions.csv", curves.to_frame())

    summary: Dict[str, Any] = {
        **curves.summary(),
        "log_lmax": mle.log_lmax,
        "mle_converged": mle.n_converged,
        "prior_draws": prior_sample.size,
        "posterior_draws": posterior_sample.size,
        "prior_acceptance": prior_sample.acceptance,
        "posterior_acceptance": posterior_sample.acceptance,
        "prior_ess": prior_sample.ess,
        "posterior_ess": posterior_sample.ess,
    }
    if config.truth:
        rho_true = parse_channel_spec(config.truth)
        log_l_true = log_likelihood(born_probabilities(rho_true, scheme), counts)
        summary["truth"] = containment_report(
            log_l_true, mle.log_lmax, prior_sample.log_likelihood(counts), posterior_ll
        )
        logger.info(f"True channel is contained in every BLR with λ ≤ {summary['truth']['lambda_true']:.4f}")
    writer.write_json("regions_summary.json", summary)
    return summary


def cmd_marginal(config: RunConfig, manager: ConfigManager, writer: ResultsWriter) -> Dict[str, Any]:
    """Marginal likelihood L(D|F) of the chosen property with its interval curves."""
    scheme = load_scheme(config.scheme)
    counts = _load_counts(config, scheme)
    family = get_family(config.family, scheme.dim)
    prior = parse_prior_spec(config.prior, scheme)
    prop = get_property(config.property_name, scheme.dim)
    stage_draws = [config.draws] * 3 if config.draws else list(manager.profile(config).marginal_draws)

    cfg = MarginalConfig(
        prior_draws=stage_draws[0],
        reweighted_draws=stage_draws[1],
        posterior_draws=stage_draws[2],
        hmc=manager.hmc_config(config, stage_draws[0]),
        chains=config.chains,
        iterations=config.iterations,
        seed=config.seed,
    )
    result = marginal_likelihood(counts, scheme, family, prop, prior, cfg)

    writer.write_csv("marginal.csv", result.to_frame())
    writer.write_csv("marginal_cdfs.csv", pd.DataFrame({"F": result.grid, **result.tables}))
    if result.interval is not None:
        writer.write_csv("marginal_intervals.csv", result.interval.to_frame())
    summary = result.summary()
    writer.write_json("marginal_summary.json", summary)
    return summary


def cmd_model_select(config: RunConfig, manager: ConfigManager, writer: ResultsWriter) -> Dict[str, Any]:
    """
    Model selection over the nested qubit families.

    With --counts or --channel, one dataset is scored. Otherwise the criteria are assessed on
    data simulated from channels drawn from every family.
    """
    scheme = load_scheme(config.scheme)
    if scheme.dim != 2:
        raise ConfigError("model-select needs a qubit scheme")
    profile = manager.profile(config)
    draws = manager.resolve_draws(config, profile.model_draws)
    sampler = get_channel_sampler()
    settings = get_settings()

    samples = {}
    for index, name in enumerate(NESTED_FAMILIES):
        hmc = manager.hmc_config(config, draws, seed_offset=index)
        samples[name] = sample_family(get_family(name), scheme, draws, config.seed + index, sampler=sampler, hmc=hmc)

    if config.counts or config.channel:
        if config.counts:
            counts = _load_counts(config, scheme)
        else:
            rho = parse_channel_spec(config.channel)
            counts = simulate_counts(rho, scheme, _copies(config, scheme), config.seed)
            write_counts_csv(counts, writer.path("counts.csv"))
            writer.written.append("counts.csv")
        report = select_model(
            counts, scheme, samples, restarts=config.restarts, seed=config.seed, max_workers=settings.max_workers
        )
        writer.write_csv("model_selection.csv", report.to_frame())
        summary = {
            "N": counts.total,
            "chosen": report.chosen,
            "posterior_sum": float(sum(report.rbr.posterior.values())),
            "favored": report.rbr.favored,
        }
        writer.write_json("model_selection.json", summary)
        return summary

    n_channels = config.n_channels or profile.n_channels
    n_values = config.n_values or profile.n_values
    assessment = assess_criteria(
        samples,
        scheme,
        n_channels,
        n_values,
        seed=config.seed,
        restarts=config.restarts,
        max_workers=settings.max_workers,
    )
    writer.write_csv("assessment_runs.csv", assessment.runs)
    writer.write_csv("selection_frequency.csv", assessment.selection)
    writer.write_csv("evidence_against.csv", assessment.evidence_against)
    summary = {"n_channels": n_channels, "n_values": list(n_values), "datasets": len(assessment.runs)}
    writer.write_json("assessment_summary.json", summary)
    return summary


COMMANDS: Dict[str, Callable[[RunConfig, ConfigManager, ResultsWriter], Dict[str, Any]]] = {
    "simulate": cmd_simulate,
    "sample": cmd_sample,
    "regions": cmd_regions,
    "marginal": cmd_marginal,
    "model-select": cmd_model_select,
}


# ============================================================================
# ENTRY POINT
# ============================================================================


def run(config: RunConfig, manager: Optional[ConfigManager] = None) -> Dict[str, Any]:
    """
    Execute one validated configuration and write its manifest.

    Returns:
        The command's summary
    """
    manager = manager or get_config_manager()
    writer = ResultsWriter(config.out)
    logger.info(f"Running '{config.command}' (seed={config.seed}, scale={config.scale}) into {config.out}")
    summary = COMMANDS[config.command](config, manager, writer)
    writer.write_manifest(config.command, config.model_dump(), extra={"summary": summary})
    return summary


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments, run the command and map failures to exit codes.

    Returns:
        0 on success, 2 on configuration errors, 3 on numerical failures
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_settings()
    setup_logging(level=getattr(args, "log_level", None) or settings.log_level, log_file=settings.log_file)

    try:
        manager = get_config_manager()
        config = config_from_args(args, manager)
        run(config, manager)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
