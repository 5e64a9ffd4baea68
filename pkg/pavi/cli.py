"""
Command line front end: dataset and model-list ingestion, configuration and
TSV report emission.
"""

import os
import sys
import csv
import json
import logging
import argparse
from dataclasses import dataclass, field, fields, asdict
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pavi import __version__
from pavi.errors import (
    PaviError,
    INVALID_INPUT,
    PARSE_ERROR,
    MISSING_COLUMN,
    MISSING_VALUE,
    NON_NUMERIC,
    CONFIG_ERROR,
    IO_ERROR,
)
from pavi.ensemble import WeightingConfig, WEIGHTING_METHODS, CandidateSet, collect_candidates, compute_weights
from pavi.glm import Dataset, fit, diagnostics, split_accuracy
from pavi.measures import CandidateEnsemble, VariableSet, assess, overlap_matrix
from pavi.paths import PenaltySpec, fit_path, select_support
from pavi.simharness import (
    CANDIDATE_PENALTIES,
    MAX_CANDIDATE_SIZE,
    ScenarioSpec,
    aggregate,
    run_batch,
    run_models_under_check,
    sigma_sweep,
)
from pavi.utils import DEFAULT_SEED, FAMILIES, child_random_state, log_progress, output_path, write_tsv

logger = logging.getLogger(__name__)

COMMANDS = ("assess", "simulate", "sweep", "paths", "diagnostics", "accuracy", "overlap")
MISSING_MARKERS = {"", "NA", "NAN", "NULL", "N/A"}

# Ensemble override used by tests: (data, candidates, config) -> CandidateEnsemble
EnsembleHook = Callable[[Dataset, CandidateSet, WeightingConfig], CandidateEnsemble]


@dataclass
class RunConfig:
    """Settings of one command; CLI flags override a JSON file, which overrides these defaults"""

    command: str = "assess"
    data: Optional[str] = None
    response: str = "y"
    family: str = "gaussian"
    models: Optional[str] = None
    weighting: List[str] = field(default_factory=lambda: ["arm", "bicp"])
    psi: float = 1.0
    splits: int = 100
    folds: int = 5
    # None resolves to 1 for assess and 100 elsewhere
    reps: Optional[int] = None
    seed: int = DEFAULT_SEED
    out: str = "."
    example: int = 1
    n: Optional[int] = None
    p: Optional[int] = None
    sigma: float = 1.0
    sigmas: Optional[str] = None
    penalty: str = "lasso"
    diagnostics: bool = False
    selectors: bool = True
    n_jobs: Optional[int] = None
    train_fraction: float = 0.5
    test_fraction: float = 0.2

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise PaviError(CONFIG_ERROR, "unknown command", str(self.command))
        if self.family not in FAMILIES:
            raise PaviError(CONFIG_ERROR, "unknown family", str(self.family))
        if isinstance(self.weighting, str):
            self.weighting = [w.strip() for w in self.weighting.split(",") if w.strip()]
        for method in self.weighting:
            if method not in WEIGHTING_METHODS:
                raise PaviError(CONFIG_ERROR, "unknown weighting method", method)
        if not self.weighting:
            raise PaviError(CONFIG_ERROR, "no weighting method requested")
        if self.reps is None:
            self.reps = 1 if self.command == "assess" else 100
        if self.reps < 1:
            raise PaviError(CONFIG_ERROR, "reps must be at least 1", f"reps={self.reps}")

    def weighting_configs(self, seed: Optional[int] = None) -> List[WeightingConfig]:
        seed = self.seed if seed is None else seed
        return [
            WeightingConfig(method=m, psi=self.psi, splits_L=self.splits, seed=seed,
                            train_fraction=self.train_fraction, n_jobs=self.n_jobs)
            for m in self.weighting
        ]


# Dataset and model-list ingestion
def _parse_cell(text: str) -> float:
    """Correctly rounded float of one CSV cell, NaN when it is not a number"""
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_dataset(path: str, response: str, family: str) -> Dataset:
    """Read a headered CSV into a Dataset, naming the first bad cell on failure"""
    if not path or not os.path.isfile(path):
        raise PaviError(IO_ERROR, "dataset file not found", str(path))
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True, encoding="utf-8")
    except (pd.errors.ParserError, UnicodeDecodeError, pd.errors.EmptyDataError) as e:
        raise PaviError(PARSE_ERROR, "could not parse dataset", f"{path}: {str(e)}")
    raw.columns = [str(c).strip() for c in raw.columns]
    if response not in raw.columns:
        raise PaviError(MISSING_COLUMN, "response column not found", f"{response} in {path}")

    stripped = raw.apply(lambda col: col.str.strip())
    missing = stripped.apply(lambda col: col.str.upper().isin(MISSING_MARKERS))
    if missing.to_numpy().any():
        row, col = np.argwhere(missing.to_numpy())[0]
        raise PaviError(MISSING_VALUE, "missing value", f"row {row + 1}, column '{raw.columns[col]}'")

    numeric = stripped.apply(lambda col: col.map(_parse_cell))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise PaviError(NON_NUMERIC, "non-numeric cell",
                        f"row {row + 1}, column '{raw.columns[col]}': {stripped.iat[row, col]!r}")

    y = numeric[response].to_numpy(dtype=float)
    predictors = [c for c in numeric.columns if c != response]
    if family == "binomial":
        invalid = np.flatnonzero(~np.isin(y, (0.0, 1.0)))
        if invalid.size:
            row = int(invalid[0])
            raise PaviError(INVALID_INPUT, "binomial response must be 0/1",
                            f"row {row + 1}, column '{response}': {stripped[response].iat[row]!r}")
    data = Dataset(numeric[predictors].to_numpy(dtype=float), y, family, predictors)
    logger.info(f"Loaded {path}: n={data.n}, p={data.p}, family={family}")
    return data


def _parse_model_line(line: str) -> Tuple[str, str, bool]:
    if ":" in line:
        name, _, indices = line.partition(":")
        return name.strip(), indices.strip(), False
    fields_ = next(csv.reader([line], skipinitialspace=True))
    if len(fields_) != 2:
        raise PaviError(PARSE_ERROR, "model line is neither 'name: i,j,k' nor two CSV columns", line)
    return fields_[0].strip(), fields_[1].strip(), True


def parse_model_list(text: str, p: Optional[int] = None) -> List[Tuple[str, VariableSet]]:
    """Named variable sets from "name: i,j,k" lines or a two-column CSV

    Blank lines and lines starting with '#' are skipped. In the CSV form the
    index field is quoted or uses ';' or spaces between indices; a header
    row is allowed.
    """
    models: List[Tuple[str, VariableSet]] = []
    names = set()
    first = True
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, indices, is_csv = _parse_model_line(line)
        indices = indices.replace(";", ",").replace(" ", ",")
        indices = ",".join(token for token in indices.split(",") if token)
        if first and is_csv and indices and not indices.replace(",", "").isdigit():
            first = False
            continue
        first = False
        if not name:
            raise PaviError(PARSE_ERROR, "model without a name", f"line {number}")
        if name in names:
            raise PaviError(PARSE_ERROR, "duplicate model name", name)
        try:
            models.append((name, VariableSet.parse(indices, p)))
        except PaviError as e:
            raise e.with_context(f"model {name}")
        names.add(name)
    return models


def read_model_file(path: str, p: Optional[int] = None) -> List[Tuple[str, VariableSet]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_model_list(f.read(), p)
    except OSError as e:
        raise PaviError(IO_ERROR, "could not read model list", f"{path}: {str(e)}")


# Commands
def _require_data(config: RunConfig) -> Dataset:
    if not config.data:
        raise PaviError(CONFIG_ERROR, f"{config.command} needs --data")
    return load_dataset(config.data, config.response, config.family)


def _listed_models(config: RunConfig, data: Optional[Dataset]) -> List[Tuple[str, VariableSet]]:
    if not config.models:
        return []
    return read_model_file(config.models, data.p if data is not None else None)


def build_candidates(data: Dataset, seed: int = DEFAULT_SEED) -> CandidateSet:
    """Candidate set from the Lasso, SCAD and MCP paths on the full data"""
    paths = [fit_path(data, PenaltySpec(kind), seed=seed) for kind in CANDIDATE_PENALTIES]
    candidates = collect_candidates(paths, max_size=min(data.n - 4, MAX_CANDIDATE_SIZE))
    logger.info(f"Collected {len(candidates)} candidate models")
    return candidates


def cmd_assess(config: RunConfig, ensemble_hook: Optional[EnsembleHook] = None) -> pd.DataFrame:
    """Estimated F and G (with sds) of every listed model and, optionally, the CV selectors"""
    data = _require_data(config)
    listed = _listed_models(config, data)
    if not listed and not config.selectors:
        raise PaviError(CONFIG_ERROR, "nothing to assess: give --models or enable selectors")

    candidates = build_candidates(data, config.seed)
    rows, contributions = [], []
    bicp_cache: Dict[str, CandidateEnsemble] = {}
    for rep in range(config.reps):
        rep_seed = config.seed if config.reps == 1 else child_random_state(config.seed, rep)
        models = list(listed)
        if config.selectors:
            models += sorted(run_models_under_check(data, rep_seed, config.folds).items(),
                             key=lambda item: item[0])

        for weighting in config.weighting_configs(rep_seed):
            if ensemble_hook is not None:
                ensemble = ensemble_hook(data, candidates, weighting)
            elif weighting.method == "bicp":
                # BIC-p weights do not depend on the seed
                if "bicp" not in bicp_cache:
                    bicp_cache["bicp"] = compute_weights(data, candidates, weighting)
                ensemble = bicp_cache["bicp"]
            else:
                ensemble = compute_weights(data, candidates, weighting)

            for name, model in models:
                try:
                    report = assess(model, ensemble, name)
                except PaviError as e:
                    raise e.with_context(f"model {name}, weighting {weighting.method}")
                rows.append({"rep": rep, "weighting": weighting.method, **report.summary()})
                if rep == 0:
                    frame = report.contributions_frame()
                    frame.insert(1, "weighting", weighting.method)
                    contributions.append(frame[frame["weight"] > 0])
        log_progress(logger, rep + 1, config.reps, "Assessment repetitions")

    per_rep = pd.DataFrame(rows)
    table = (
        per_rep.groupby(["model", "weighting"], sort=False)
        .agg(
            variables=("variables", lambda s: s.mode().iloc[0]),
            size=("size", "mean"),
            F_hat=("F_hat", "mean"),
            G_hat=("G_hat", "mean"),
            sd_F=("sd_F", "mean"),
            sd_G=("sd_G", "mean"),
            precision_hat=("precision_hat", "mean"),
            recall_hat=("recall_hat", "mean"),
        )
        .reset_index()
    )
    table.insert(2, "reps", config.reps)

    write_tsv(table, output_path(config.out, "assessment"))
    if contributions:
        write_tsv(pd.concat(contributions, ignore_index=True), output_path(config.out, "contributions"))
    if config.diagnostics:
        first = per_rep[per_rep["rep"] == 0].drop_duplicates("model")
        named = [(row.model, VariableSet.parse(row.variables)) for row in first.itertuples()]
        write_tsv(diagnostics_table(data, named), output_path(config.out, "diagnostics"))
    return table


def diagnostics_table(data: Dataset, models: Sequence[Tuple[str, VariableSet]]) -> pd.DataFrame:
    """AIC, BIC and deviance of each model refitted on the full data"""
    rows = []
    for name, model in models:
        row = {"model": name, "variables": str(model), "size": len(model)}
        try:
            fitted = fit(data, model)
            diag = diagnostics(fitted, data)
            row.update(AIC=diag.aic, BIC=diag.bic, deviance=diag.deviance, log_lik=diag.log_lik,
                       converged=fitted.converged)
        except PaviError as e:
            logger.warning(f"Diagnostics unavailable for {name}: {str(e)}")
            row.update(AIC=np.nan, BIC=np.nan, deviance=np.nan, log_lik=np.nan, converged=False)
        rows.append(row)
    return pd.DataFrame(rows, columns=["model", "variables", "size", "AIC", "BIC", "deviance",
                                       "log_lik", "converged"])


def cmd_diagnostics(config: RunConfig) -> pd.DataFrame:
    data = _require_data(config)
    models = _listed_models(config, data)
    if not models:
        raise PaviError(CONFIG_ERROR, "diagnostics needs --models")
    table = diagnostics_table(data, models)
    write_tsv(table, output_path(config.out, "diagnostics"))
    return table


def _scenario(config: RunConfig) -> ScenarioSpec:
    return ScenarioSpec(example_id=config.example, family=config.family, n=config.n, p=config.p,
                        sigma=config.sigma, seed=config.seed)


def cmd_simulate(config: RunConfig):
    """Aggregate table (and per-replication records) for one example and family"""
    spec = _scenario(config)
    table = aggregate(run_batch(spec, config.reps, config.weighting_configs(), config.n_jobs))
    fields_ = {"example": str(config.example), "family": config.family}
    write_tsv(table.frame, output_path(config.out, "simulation", **fields_))
    write_tsv(table.replications, output_path(config.out, "replications", **fields_))
    return table


def parse_sigmas(text: Optional[str]) -> Optional[List[float]]:
    """"start:stop:count" for an even grid, or a comma-separated list"""
    if text is None:
        return None
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            return [float(s) for s in np.linspace(float(start), float(stop), int(count))]
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise PaviError(PARSE_ERROR, "sigma grid must be 'start:stop:count' or a list", text)


def cmd_sweep(config: RunConfig) -> pd.DataFrame:
    spec = _scenario(config)
    result = sigma_sweep(spec, parse_sigmas(config.sigmas), config.reps, config.weighting_configs(),
                         config.n_jobs)
    tidy = result.tidy()
    write_tsv(tidy, output_path(config.out, "sweep", example=str(config.example)))
    return tidy


def cmd_paths(config: RunConfig) -> pd.DataFrame:
    """Per-lambda support summary of one penalized path with its CV curve"""
    data = _require_data(config)
    penalty = PenaltySpec(config.penalty)
    support, cv, path = select_support(data, penalty, config.folds, config.seed)
    table = pd.DataFrame({
        "lambda_index": np.arange(len(path)),
        "lambda": path.grid.values,
        "intercept": path.intercepts,
        "size": [len(s) for s in path.supports],
        "variables": [str(s) for s in path.supports],
        "cv_loss": cv.cv_losses,
        "chosen": np.arange(len(path)) == cv.chosen_index,
        "converged": path.converged,
    })
    write_tsv(table, output_path(config.out, "path", penalty=path.penalty.kind))
    logger.info(f"{path.penalty.kind} CV choice: lambda={cv.chosen_lambda:.4g}, variables {support}")
    return table


def cmd_accuracy(config: RunConfig) -> pd.DataFrame:
    """Repeated-split logistic test accuracy of each listed model"""
    data = _require_data(config)
    models = _listed_models(config, data)
    if not models:
        raise PaviError(CONFIG_ERROR, "accuracy needs --models")
    rows = []
    for name, model in models:
        try:
            summary = split_accuracy(data, model, config.test_fraction, config.reps, config.seed)
        except PaviError as e:
            raise e.with_context(f"model {name}")
        rows.append({"model": name, "variables": str(model), "size": len(model),
                     "accuracy": summary.mean, "se": summary.se})
    table = pd.DataFrame(rows)
    write_tsv(table, output_path(config.out, "accuracy"))
    return table


def cmd_overlap(config: RunConfig) -> pd.DataFrame:
    data = _require_data(config) if config.data else None
    models = _listed_models(config, data)
    if not models:
        raise PaviError(CONFIG_ERROR, "overlap needs --models")
    table = overlap_matrix(dict(models)).reset_index().rename(columns={"index": "model"})
    write_tsv(table, output_path(config.out, "overlap"))
    return table


HANDLERS = {
    "assess": cmd_assess,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "paths": cmd_paths,
    "diagnostics": cmd_diagnostics,
    "accuracy": cmd_accuracy,
    "overlap": cmd_overlap,
}


# Argument parsing
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pavi", description="Estimate F- and G-measures of variable selections")
    parser.add_argument("--version", action="version", version=f"pavi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser):
        p.add_argument("--config", help="JSON file with default settings")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--n-jobs", dest="n_jobs", type=int)

    def data_args(p: argparse.ArgumentParser):
        p.add_argument("--data", help="CSV file with a header row")
        p.add_argument("--response", help="response column name")
        p.add_argument("--family", choices=FAMILIES)

    def weighting_args(p: argparse.ArgumentParser):
        p.add_argument("--weighting", help="comma-separated subset of arm,bicp")
        p.add_argument("--psi", type=float)
        p.add_argument("--splits", type=int)
        p.add_argument("--train-fraction", dest="train_fraction", type=float)

    def scenario_args(p: argparse.ArgumentParser):
        p.add_argument("--example", type=int)
        p.add_argument("--family", choices=FAMILIES)
        p.add_argument("--n", type=int)
        p.add_argument("--p", type=int)
        p.add_argument("--reps", type=int)

    assess_p = sub.add_parser("assess", help="estimate F and G of listed models", argument_default=argparse.SUPPRESS)
    common(assess_p)
    data_args(assess_p)
    weighting_args(assess_p)
    assess_p.add_argument("--models")
    assess_p.add_argument("--folds", type=int)
    assess_p.add_argument("--reps", type=int)
    assess_p.add_argument("--diagnostics", action="store_true")
    assess_p.add_argument("--no-selectors", dest="selectors", action="store_false")

    simulate_p = sub.add_parser("simulate", help="simulation table for one example",
                                argument_default=argparse.SUPPRESS)
    common(simulate_p)
    scenario_args(simulate_p)
    weighting_args(simulate_p)
    simulate_p.add_argument("--sigma", type=float)

    sweep_p = sub.add_parser("sweep", help="gaussian noise-level sweep", argument_default=argparse.SUPPRESS)
    common(sweep_p)
    scenario_args(sweep_p)
    weighting_args(sweep_p)
    sweep_p.add_argument("--sigmas", help="'start:stop:count' or comma list")

    paths_p = sub.add_parser("paths", help="penalized solution path", argument_default=argparse.SUPPRESS)
    common(paths_p)
    data_args(paths_p)
    paths_p.add_argument("--penalty", choices=("lasso", "adlasso", "adaptive_lasso", "scad", "mcp"))
    paths_p.add_argument("--folds", type=int)

    diag_p = sub.add_parser("diagnostics", help="AIC, BIC and deviance of listed models",
                            argument_default=argparse.SUPPRESS)
    common(diag_p)
    data_args(diag_p)
    diag_p.add_argument("--models")

    accuracy_p = sub.add_parser("accuracy", help="repeated-split logistic accuracy",
                                argument_default=argparse.SUPPRESS)
    common(accuracy_p)
    data_args(accuracy_p)
    accuracy_p.add_argument("--models")
    accuracy_p.add_argument("--reps", type=int)
    accuracy_p.add_argument("--test-fraction", dest="test_fraction", type=float)

    overlap_p = sub.add_parser("overlap", help="shared variables between listed models",
                               argument_default=argparse.SUPPRESS)
    common(overlap_p)
    overlap_p.add_argument("--models")
    overlap_p.add_argument("--data")

    return parser


def load_config_file(path: str) -> Dict[str, object]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            values = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise PaviError(CONFIG_ERROR, "could not read config file", f"{path}: {str(e)}")
    if not isinstance(values, dict):
        raise PaviError(CONFIG_ERROR, "config file must hold a JSON object", path)
    known = {f.name for f in fields(RunConfig)} - {"command"}
    unknown = sorted(set(values) - known)
    if unknown:
        raise PaviError(CONFIG_ERROR, "unknown config keys", ", ".join(unknown))
    return values


def build_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    """Merge defaults, the optional JSON file and the command line, in that order"""
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    values = asdict(RunConfig(command=command))
    config_path = args.pop("config", None)
    if config_path:
        values.update(load_config_file(config_path))
    values.update(args)
    values["command"] = command
    try:
        return RunConfig(**values)
    except TypeError as e:
        raise PaviError(CONFIG_ERROR, "invalid configuration", str(e))


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    try:
        config = build_config(argv)
        logger.info(f"Running {config.command} (seed={config.seed})")
        logger.debug(f"Configuration: {asdict(config)}")
        HANDLERS[config.command](config)
        logger.info(f"Finished {config.command}; outputs in {os.path.abspath(config.out)}")
        return 0
    except PaviError as e:
        logger.error(f"{config_label(argv)} failed: {str(e)}")
        print(str(e), file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"Unexpected error: {str(e)}")
        print(f"internal-error: {str(e)}: {type(e).__name__}", file=sys.stderr)
        return 2


def config_label(argv: Optional[Sequence[str]]) -> str:
    argv = list(sys.argv[1:] if argv is None else argv)
    return argv[0] if argv else "pavi"
