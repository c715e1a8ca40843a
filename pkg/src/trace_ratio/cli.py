import logging
import os
import sys
import time
from argparse import ArgumentParser, Namespace
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, NamedTuple, Sequence, Tuple, Union

import pandas as pd

from .evaluation import SplitSpec, evaluate_model
from .fileformats import (
    problem_filename,
    read_dataset,
    read_problem,
    write_dataset,
    write_problem,
    write_projections,
    write_result_csv,
)
from .multiview import (
    MultiViewModelSpec,
    alternate_solve,
    build_block_problem,
    get_models,
    model_label,
    view_certificates,
)
from .scf import SolveReport, SolverOptions, SolveStatus, scf_solve
from .synthetic import SynthSpec, generate, generate_multiview_gaussian
from .util import (
    BootstrapError,
    DatasetError,
    DimensionError,
    FormatError,
    NormMode,
    ProblemError,
    SplitError,
    TraceRatioError,
    UpdateMode,
    config_hash,
    expand_dir,
    theta_grid,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MAX_ITER = 2
EXIT_STAGNATED = 3
EXIT_BOOTSTRAP = 4
EXIT_INVALID_INPUT = 5

TRAJECTORY_COLUMNS = ["iter", "f_theta", "residual", "gap", "rank_xtd", "step_sintheta"]
SUMMARY_COLUMNS = [
    "n",
    "k",
    "theta",
    "iters",
    "converged",
    "final_f",
    "final_residual",
    "rate",
    "cpu_seconds",
]
GRID_COLUMNS = ["model", "k", "theta", "mean_acc", "std_acc", "alpha"]
ALPHA_GRID = [0.01, 0.1, 1.0, 10.0, 100.0]

log = logging.getLogger(__name__)


class CLIFormatter(logging.Formatter):
    # fmt: off
    WHITE       = "\x1b[0;37m"
    YELLOW      = "\x1b[0;33m"
    RED         = "\x1b[0;31m"
    BOLD_RED    = "\x1b[1;31m"
    RESET       = "\x1b[0m"
    CYAN        = "\x1b[0;36m"
    SEP         = WHITE + ":" + RESET
    # fmt: on

    DEBUG = logging.Formatter(
        f"{WHITE}%(levelname)s - {CYAN}%(name)s{RESET}{SEP} %(message)s"
    )
    INFO = logging.Formatter("%(message)s")
    WARNING = logging.Formatter(f"{YELLOW}%(levelname)s{RESET}{SEP} %(message)s")
    ERROR = logging.Formatter(f"{RED}%(levelname)s{RESET}{SEP} %(message)s")
    CRITICAL = logging.Formatter(f"{BOLD_RED}%(levelname)s{RESET}{SEP} %(message)s")

    def __init__(self) -> None:
        super().__init__(style="%")

    def format(self, record: logging.LogRecord) -> str:
        if record.levelno <= logging.DEBUG:
            return CLIFormatter.DEBUG.format(record)
        elif record.levelno <= logging.INFO:
            return CLIFormatter.INFO.format(record)
        elif record.levelno <= logging.WARNING:
            return CLIFormatter.WARNING.format(record)
        elif record.levelno <= logging.ERROR:
            return CLIFormatter.ERROR.format(record)
        else:
            return CLIFormatter.CRITICAL.format(record)


class _BelowWarning(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        return record.levelno < logging.WARNING


def setup_cli_logging() -> logging.Logger:
    """Messages go to stdout, warnings and errors to stderr"""
    out = logging.StreamHandler(sys.stdout)
    out.setFormatter(CLIFormatter())
    out.addFilter(_BelowWarning())
    err = logging.StreamHandler(sys.stderr)
    err.setFormatter(CLIFormatter())
    err.setLevel(logging.WARNING)

    pkg_log = logging.getLogger(__package__)
    if not pkg_log.handlers:
        pkg_log.addHandler(out)
        pkg_log.addHandler(err)
    pkg_log.setLevel(logging.INFO)

    return pkg_log


############################################################
# Run configuration
############################################################

# Arguments that do not change results
_UNHASHED = {"debug", "verbose", "workers", "timing"}


class RunConfig(NamedTuple):
    command: str
    out: str
    options: Dict[str, Any]

    @classmethod
    def make(cls, args: Namespace) -> "RunConfig":
        options = {
            key: value
            for key, value in sorted(vars(args).items())
            if key not in _UNHASHED and key not in ("cmd", "out")
        }
        return cls(command=args.cmd, out=expand_dir(args.out), options=options)

    @property
    def hash(self) -> str:
        return config_hash({"command": self.command, **self.options})

    def provenance(self) -> Dict[str, Any]:
        """Comment header fields; seed only for commands that draw random numbers"""
        provenance: Dict[str, Any] = {"command": self.command}
        seed = self.options.get("seed")
        if isinstance(seed, (list, tuple)):
            seed = " ".join(str(s) for s in seed)
        if seed is not None:
            provenance["seed"] = seed
        provenance["config_hash"] = self.hash
        return provenance


class RunFailure(NamedTuple):
    name: str
    code: int
    message: str


def _exit_code(e: BaseException) -> int:
    if isinstance(e, BootstrapError):
        return EXIT_BOOTSTRAP
    if isinstance(e, (FormatError, ProblemError, DatasetError, DimensionError, SplitError)):
        return EXIT_INVALID_INPUT
    return EXIT_FAILURE


def _run_all(
    names: Sequence[str],
    job: Callable[[str], Any],
    workers: int,
) -> Tuple[List[Any], List[RunFailure]]:
    """Run job for every name, results in input order"""

    def guarded(name: str) -> Tuple[Any, Union[RunFailure, None]]:
        try:
            return job(name), None
        except (TraceRatioError, OSError) as e:
            return None, RunFailure(name, _exit_code(e), str(e))

    if workers > 1 and len(names) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(guarded, names))
    else:
        outcomes = [guarded(name) for name in names]
    results = [r for r, f in outcomes if f is None]
    failures = [f for _, f in outcomes if f is not None]
    return results, failures


def _report_failures(failures: Sequence[RunFailure]) -> int:
    if not failures:
        return EXIT_OK
    log.error("%d run(s) failed:", len(failures))
    for f in failures:
        log.error("  %s (exit %d): %s", f.name, f.code, f.message)
    return failures[0].code


############################################################
# Commands
############################################################


def cmd_synth(config: RunConfig, workers: int = 1) -> int:
    opts = config.options
    os.makedirs(config.out, exist_ok=True)
    specs = {
        problem_filename(n, k, seed): SynthSpec(n=n, k=k, seed=seed, theta=opts["theta"])
        for n in opts["n"]
        for k in opts["k"]
        for seed in opts["seed"]
    }

    def job(name: str) -> str:
        filename = os.path.join(config.out, name)
        write_problem(filename, generate(specs[name]))
        log.info("Wrote %s", filename)
        return filename

    _, failures = _run_all(list(specs), job, workers)
    return _report_failures(failures)


def cmd_synth_mv(config: RunConfig) -> int:
    opts = config.options
    ds = generate_multiview_gaussian(
        m=opts["m"],
        view_dims=opts["dims"],
        n_classes=opts["classes"],
        separation=opts["separation"],
        sigma=opts["sigma"],
        seed=opts["seed"],
    )
    write_dataset(config.out, ds, config.provenance())
    return EXIT_OK


def _solver_options(opts: Dict[str, Any], **kwargs: Any) -> SolverOptions:
    return SolverOptions(
        tol=opts["tol"],
        max_iter=opts["max_iter"],
        norm_mode=NormMode.make(opts.get("norm", "2")),
        **kwargs,
    )


def _trajectory_frame(report: SolveReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (r.iteration, r.f_theta, r.residual, r.gap, r.rank_xtd, r.step_sintheta)
            for r in report.trajectory
        ],
        columns=TRAJECTORY_COLUMNS,
    )


def cmd_solve(config: RunConfig, workers: int = 1, timing: bool = False) -> int:
    opts = config.options
    os.makedirs(config.out, exist_ok=True)
    solver = _solver_options(opts)
    provenance = config.provenance()

    def job(filename: str) -> Dict[str, Any]:
        problem = read_problem(filename)
        start = time.process_time()
        report = scf_solve(problem, opts=solver)
        cpu = time.process_time() - start
        stem = os.path.splitext(os.path.basename(filename))[0]
        write_result_csv(
            os.path.join(config.out, f"{stem}_trajectory.csv"),
            _trajectory_frame(report),
            provenance,
        )
        if report.status != SolveStatus.CONVERGED:
            code = EXIT_MAX_ITER if report.status == SolveStatus.MAX_ITER else EXIT_STAGNATED
            failed = RunFailure(filename, code, f"solver {report.status}")
        else:
            failed = None
        row = {
            "n": problem.n,
            "k": problem.k,
            "theta": problem.theta,
            "iters": report.iterations,
            "converged": int(report.converged),
            "final_f": report.f_theta,
            "final_residual": report.residual,
            "rate": report.estimated_rate,
            "cpu_seconds": cpu if timing else None,
        }
        return {"row": row, "failed": failed}

    results, failures = _run_all(opts["problems"], job, workers)
    failures = [r["failed"] for r in results if r["failed"] is not None] + failures
    summary = pd.DataFrame([r["row"] for r in results], columns=SUMMARY_COLUMNS)
    write_result_csv(os.path.join(config.out, "summary.csv"), summary, provenance)
    return _report_failures(failures)


def _model_spec(opts: Dict[str, Any], family: str, alpha: float) -> MultiViewModelSpec:
    return MultiViewModelSpec(
        family=family,
        alpha=alpha,
        theta=opts["theta"][0],
        k=opts["k"][0],
    )


def cmd_mvsl_fit(config: RunConfig, workers: int = 1) -> int:
    opts = config.options
    ds = read_dataset(opts["dataset"])
    mode = UpdateMode.make(opts["mode"])
    spec = _model_spec(opts, opts["model"][0], opts["alpha"][0])
    bp = build_block_problem(ds, spec)
    fit = alternate_solve(
        bp,
        mode=mode,
        solver_options=_solver_options(opts, record_trajectory=False),
        workers=workers,
    )
    write_projections(config.out, ds.names, fit.projections, config.provenance())
    residuals = [cert.nepv_residual for cert in view_certificates(bp, fit.projections)]
    summary = pd.DataFrame(
        [
            {
                "model": model_label(spec.family, mode),
                "k": spec.k,
                "theta": spec.theta,
                "alpha": spec.alpha,
                "sweeps": fit.sweeps,
                "converged": int(fit.converged),
                "final_f": fit.f_theta,
                "max_view_residual": max(residuals),
            }
        ]
    )
    write_result_csv(os.path.join(config.out, "fit.csv"), summary, config.provenance())
    log.info("Wrote %d projections to %s", ds.v, config.out)
    return EXIT_OK if fit.converged else EXIT_MAX_ITER


def cmd_mvsl_eval(config: RunConfig, workers: int = 1) -> int:
    opts = config.options
    ds = read_dataset(opts["dataset"])
    mode = UpdateMode.make(opts["mode"])
    split = SplitSpec(
        train_fraction=opts["train_fraction"],
        n_repeats=opts["repeats"],
        seed=opts["seed"],
    )
    solver = SolverOptions(max_iter=opts["max_iter"], tol=opts["tol"], record_trajectory=False)

    grid, best = [], []
    for family in opts["model"]:
        uses_alpha = get_models()[family].uses_alpha
        for alpha in opts["alpha"] if uses_alpha else opts["alpha"][:1]:
            table = evaluate_model(
                ds,
                _model_spec(opts, family, alpha),
                split,
                k_grid=opts["k"],
                thetas=opts["theta"],
                mode=mode,
                solver_options=solver,
                baseline=opts["baseline"],
                workers=workers,
            )
            for rows, target in ((table.rows, grid), (table.best_theta(), best)):
                for row in rows:
                    target.append(
                        {
                            "model": row.model,
                            "k": row.k,
                            "alpha": row.alpha if uses_alpha else None,
                            "theta": row.theta,
                            "mean_acc": row.result.mean,
                            "std_acc": row.result.std,
                        }
                    )

    os.makedirs(config.out, exist_ok=True)
    provenance = config.provenance()
    write_result_csv(
        os.path.join(config.out, "eval_grid.csv"),
        pd.DataFrame(grid, columns=GRID_COLUMNS),
        provenance,
    )
    write_result_csv(
        os.path.join(config.out, "best_theta.csv"),
        pd.DataFrame(best, columns=["model", "k", "alpha", "theta", "mean_acc", "std_acc"]),
        {**provenance, "selection": "best mean accuracy on the test splits"},
    )
    return EXIT_OK


############################################################
# Argument parsing
############################################################


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError(text)
    return value


def _add_solver_args(p: ArgumentParser, max_iter: int) -> None:
    p.add_argument("--tol", type=float, default=1e-7, help="residual tolerance")
    p.add_argument(
        "--max-iter", type=_positive_int, default=max_iter, help="SCF iteration limit"
    )
    p.add_argument(
        "--norm",
        choices=["2", "1"],
        default="2",
        help="norm used in the residual normalization",
    )


def _add_model_args(p: ArgumentParser, many: bool) -> None:
    nargs = "+" if many else 1
    p.add_argument("dataset", metavar="DIR", help="dataset directory")
    p.add_argument(
        "--model",
        nargs=nargs,
        choices=sorted(get_models()),
        default=["gma"],
        help="model family",
    )
    p.add_argument(
        "--alpha",
        nargs=nargs,
        type=float,
        default=ALPHA_GRID if many else [1.0],
        help="cross-view weight for gma and mlda",
    )
    p.add_argument(
        "--k", nargs=nargs, type=_positive_int, default=[2], help="subspace dimension"
    )
    p.add_argument(
        "--theta",
        nargs=nargs,
        type=float,
        default=theta_grid() if many else [0.5],
        help="exponent of the denominator",
    )
    p.add_argument(
        "--mode",
        choices=["jacobi", "gauss-seidel"],
        default="gauss-seidel",
        help="update order of the alternating iteration",
    )
    p.add_argument("--tol", type=float, default=1e-7, help="inner SCF tolerance")
    p.add_argument(
        "--max-iter", type=_positive_int, default=50, help="inner SCF iteration limit"
    )


def main(argv: Union[Sequence[str], None] = None) -> int:
    log = setup_cli_logging()

    help_sections = {
        "formats": """File formats.

Problem file (.trp), little-endian:
    magic "TRPB" (4 bytes), version uint32 = 1, n uint64, k uint64,
    theta float64, then A (n x n), B (n x n), D (n x k) as row-major float64.

Dataset directory:
    manifest.json   {"format", "version", "samples", "labels", "views"}
                    views is a list of {"name", "file", "dim"}
    <view>.csv      one row per feature, one column per sample, no header
    labels.csv      one integer class label per line

Every CSV written here starts with '# key: value' lines holding the command,
the seed (commands that draw random numbers only) and the configuration hash.
The last comment line is the generation time.

solve:      <problem>_trajectory.csv  iter,f_theta,residual,gap,rank_xtd,step_sintheta
            summary.csv               n,k,theta,iters,converged,final_f,
                                      final_residual,rate,cpu_seconds
mvsl-fit:   projection_<view>.csv, fit.csv
mvsl-eval:  eval_grid.csv             model,k,theta,mean_acc,std_acc,alpha
            best_theta.csv            model,k,alpha,theta,mean_acc,std_acc
""",
        "models": """Model families (--model).

    mcca    A_st = C_st                     B_s = C_ss
    gma     A_ss = S_b, A_st = alpha C_st   B_s = S_w
    mlda    A_ss = S_b, A_st = alpha C_st   B_s = C_ss
    mvmda   A_st = M_st                     B_s = S_w

C is the cross covariance, S_b and S_w the between and within class scatter
and M the scatter of the class centers. B_s gets 1e-8 added to its diagonal.

Result rows name the model by family and update mode, OGMA-G for gma with
Gauss-Seidel updates, OMCCA-J for mcca with Jacobi updates. With --baseline
the generalized eigenvalue solution appears as the plain family name.
""",
    }
    help_cmds: Dict[str, Union[None, ArgumentParser]] = {
        "synth": None,
        "synth-mv": None,
        "solve": None,
        "mvsl-fit": None,
        "mvsl-eval": None,
    }
    all_sections = sorted(help_sections.keys() | help_cmds.keys())

    parser = ArgumentParser(prog=__package__)
    sub = parser.add_subparsers(required=True, dest="cmd")

    help = sub.add_parser("help", help="show help section", add_help=False)
    help.add_argument(
        "section",
        metavar="SECTION",
        nargs="?",
        default=None,
        choices=all_sections,
        help=f"show help and exit. possible sections: {', '.join(all_sections)}",
    )
    synth = sub.add_parser("synth", help="generate random problem files")
    synth.add_argument("--n", nargs="+", type=_positive_int, required=True)
    synth.add_argument("--k", nargs="+", type=_positive_int, required=True)
    synth.add_argument("--seed", nargs="+", type=int, default=[0])
    synth.add_argument("--theta", type=float, default=0.5)

    synth_mv = sub.add_parser(
        "synth-mv", help="generate a separable multi-view Gaussian dataset"
    )
    synth_mv.add_argument("--m", type=_positive_int, default=300, help="samples")
    synth_mv.add_argument("--dims", nargs="+", type=_positive_int, default=[8, 10, 12])
    synth_mv.add_argument("--classes", type=_positive_int, default=3)
    synth_mv.add_argument("--separation", type=float, default=5.0)
    synth_mv.add_argument("--sigma", type=float, default=1.0)
    synth_mv.add_argument("--seed", type=int, default=0)

    solve = sub.add_parser("solve", help="run SCF on problem files")
    solve.add_argument("problems", metavar="FILE", nargs="+", help="problem files")
    _add_solver_args(solve, 1000)
    solve.add_argument(
        "--timing",
        action="store_true",
        help="fill cpu_seconds; the summary then differs between reruns",
    )

    fit = sub.add_parser("mvsl-fit", help="fit projections on a dataset")
    _add_model_args(fit, many=False)

    evaluate = sub.add_parser(
        "mvsl-eval", help="1-NN accuracy grid over repeated splits"
    )
    _add_model_args(evaluate, many=True)
    evaluate.add_argument("--train-fraction", type=float, default=0.1)
    evaluate.add_argument("--repeats", type=_positive_int, default=10)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument(
        "--baseline", action="store_true", help="add generalized eigenvalue rows"
    )

    help_cmds.update(
        {
            "synth": synth,
            "synth-mv": synth_mv,
            "solve": solve,
            "mvsl-fit": fit,
            "mvsl-eval": evaluate,
        }
    )
    for p in [synth, synth_mv, solve, fit, evaluate]:
        p.add_argument("--out", metavar="DIR", default=".", help="output directory")
        p.add_argument(
            "--workers", type=_positive_int, default=1, help="parallel runs"
        )
        p.add_argument(
            "-v", "--verbose", action="store_true", help="show progress messages"
        )
        p.add_argument("--debug", action="store_true", help="show debug messages")

    args = parser.parse_args(argv)

    if args.cmd == "help":
        if args.section:
            if args.section in help_sections:
                print(help_sections[args.section])
            elif help_cmds[args.section] is not None:
                help_cmds[args.section].print_help()  # type: ignore
            else:
                log.error("unhandled section: %s", args.section)
        else:
            help.print_help()
        return EXIT_OK

    if args.debug:
        log.setLevel(logging.DEBUG)
    elif not args.verbose:
        log.setLevel(logging.WARNING)

    config = RunConfig.make(args)
    log.debug("Configuration %s: %s", config.hash, config.options)
    try:
        if args.cmd == "synth":
            return cmd_synth(config, workers=args.workers)
        elif args.cmd == "synth-mv":
            return cmd_synth_mv(config)
        elif args.cmd == "solve":
            return cmd_solve(config, workers=args.workers, timing=args.timing)
        elif args.cmd == "mvsl-fit":
            return cmd_mvsl_fit(config, workers=args.workers)
        else:
            return cmd_mvsl_eval(config, workers=args.workers)
    except (TraceRatioError, OSError, ValueError) as e:
        log.error("%s", e)
        return _exit_code(e)


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
