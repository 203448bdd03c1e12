"""
Command line entry point. Every output embeds a manifest of the subcommand,
its flags, its seed and the digests of its inputs, so identical manifests
give identical outputs.
"""
import argparse
import hashlib
import json
import logging
import math
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import (
    Any,
    Callable,
    Dict,
    Iterator,
    List,
    Optional,
    TextIO,
    Tuple,
    TypeVar,
)

import numpy as np
import pandas as pd

from . import __version__
from .bounds import (
    DEFAULT_BOOTSTRAP,
    ERROR_RATE_N_GRID,
    RISK_DELTAS,
    BoundMethod,
    GammaSpec,
    bound_policy,
    error_rate_experiment,
    risk_table,
)
from .capacity import CapacitySpec, TypedMdpFamily, column_generation
from .core.exceptions import MalformedFile, OverlappingSplits, SaferecError
from .core.policies import Policy, TabularPolicy, policy_from_dict
from .core.tools import default_workers
from .core.trajectories import Dataset, DiscountSpec, dump_jsonl, read_jsonl
from .estimators import UNDISCOUNTED, Estimator, importance_weighted_returns
from .fqi import RegressorKind, fqi_train, save_policy
from .improvement import (
    CandidateSearchConfig,
    CandidateVariant,
    DaedalusVariant,
    SafetySpec,
    daedalus,
    improve,
    split_data,
)
from .nonstationary import rolling_compare
from .psrl import (
    ThetaFamily,
    compare_psrl,
    ds_psrl,
    greedy_thompson,
)
from .pst import Pst, RewardSpec, pst_fit, read_sequences, select_pst
from .simulators import (
    SimEnv,
    bandit_env,
    chain_env,
    contextual_env,
    funnel_env,
    improvable_env,
    exact_value,
    simulate,
    sparse_click_env,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

BUILTIN_ENVS: Dict[str, Callable[[], SimEnv]] = {
    "chain": chain_env,
    "funnel": funnel_env,
    "improvable": improvable_env,
    "contextual": contextual_env,
    "sparse": sparse_click_env,
    "bandit": lambda: bandit_env((0.1, 0.3)),
}

# Flags that only affect speed or verbosity stay out of the manifest
UNRECORDED = {"func", "verbose", "workers"}

# Smallest trial count error_rate_experiment accepts
CLI_TRIALS = 1000


@dataclass
class RunManifest:
    subcommand: str
    flags: Dict[str, Any]
    seed: Optional[int]
    inputs: Dict[str, str] = field(default_factory=dict)
    version: str = __version__

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def file_digest(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _manifest(args: argparse.Namespace, inputs: List[str]) -> RunManifest:
    flags = {
        k: v
        for k, v in sorted(vars(args).items())
        if k not in UNRECORDED and v is not None
    }
    digests = {}
    for name in inputs:
        path = getattr(args, name, None)
        if path is not None and Path(path).is_file():
            digests[name] = file_digest(path)
    return RunManifest(
        subcommand=args.command_path,
        flags=flags,
        seed=getattr(args, "seed", None),
        inputs=digests,
    )


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, Enum):
        return value.value
    return value


@contextmanager
def _output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as f:
            yield f


def write_json(
    result: Any, manifest: RunManifest, path: Optional[str]
) -> None:
    with _output(path) as f:
        json.dump(
            _jsonable({"manifest": manifest.to_dict(), "result": result}),
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")


def write_csv(
    df: pd.DataFrame,
    manifest: RunManifest,
    path: Optional[str],
    summary: Optional[Dict[str, Any]] = None,
) -> None:
    with _output(path) as f:
        f.write(
            "# manifest: "
            + json.dumps(_jsonable(manifest.to_dict()), sort_keys=True)
            + "\n"
        )
        if summary is not None:
            f.write(
                "# summary: "
                + json.dumps(_jsonable(summary), sort_keys=True)
                + "\n"
            )
        df.to_csv(f, index=False, lineterminator="\n")


def read_json(path: str, parse: Callable[[Any], T]) -> T:
    """
    Reads a JSON input file and parses it; bad content raises MalformedFile
    """
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise MalformedFile(path, f"not valid JSON: {e}")
    try:
        return parse(raw)
    except KeyError as e:
        raise MalformedFile(path, f"missing field {e}")
    except (AttributeError, TypeError, ValueError) as e:
        raise MalformedFile(path, str(e))


def load_policy_json(path: str) -> Policy:
    return read_json(path, policy_from_dict)


def load_env(name_or_path: str) -> SimEnv:
    if name_or_path in BUILTIN_ENVS:
        return BUILTIN_ENVS[name_or_path]()
    return read_json(name_or_path, SimEnv.from_dict)


def _pst_from_json(raw: Dict[str, Any]) -> Pst:
    # Both a bare tree and the output of `pst fit`
    if "result" in raw:
        raw = raw["result"]["pst"]
    return Pst.from_dict(raw)


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _methods(text: str) -> List[BoundMethod]:
    return [BoundMethod(x.strip()) for x in text.split(",") if x.strip()]


def _check_disjoint(args: argparse.Namespace, first: str, second: str) -> None:
    a, b = getattr(args, first), getattr(args, second)
    if a is not None and b is not None:
        if Path(a).resolve() == Path(b).resolve():
            raise OverlappingSplits(first, second, a)


def _write_risk_table(
    args: argparse.Namespace,
    data: Dataset,
    pi_e: Policy,
    disc: DiscountSpec,
    manifest: RunManifest,
) -> None:
    if args.risk_table is None:
        return
    xs = importance_weighted_returns(
        data, pi_e, Estimator(args.estimator), disc
    )
    table = risk_table(
        xs,
        RISK_DELTAS,
        BoundMethod(args.method),
        seed=args.seed,
        bootstrap_b=args.bootstrap,
    )
    write_csv(table, manifest, args.risk_table, {"n": data.n})


def cmd_bound(args: argparse.Namespace) -> None:
    data = read_jsonl(args.input)
    pi_e = load_policy_json(args.policy)
    disc = DiscountSpec(args.gamma)
    result = bound_policy(
        data,
        pi_e,
        args.delta,
        BoundMethod(args.method),
        Estimator(args.estimator),
        disc,
        m=args.m,
        seed=args.seed,
        bootstrap_b=args.bootstrap,
    )
    manifest = _manifest(args, ["input", "policy"])
    _write_risk_table(args, data, pi_e, disc, manifest)
    write_json(result.to_dict(), manifest, args.out)


def cmd_fqi(args: argparse.Namespace) -> None:
    _check_disjoint(args, "train", "val")
    _check_disjoint(args, "val", "test")
    _check_disjoint(args, "train", "test")
    train = read_jsonl(args.train)
    val = read_jsonl(args.val)
    test = None if args.test is None else read_jsonl(args.test)
    result = fqi_train(
        train,
        val,
        args.K,
        disc=DiscountSpec(args.gamma),
        epsilon=args.epsilon,
        delta=args.delta,
        method=BoundMethod(args.method),
        seed=args.seed,
        test=test,
        keep_fraction=args.keep_fraction,
        estimator=Estimator(args.estimator),
        regressor=RegressorKind(args.regressor),
        workers=args.workers,
    )
    if args.model_out is not None:
        save_policy(result.policy, args.model_out)
    manifest = _manifest(args, ["train", "val", "test"])
    # The chosen policy is bounded on the split that did not choose it
    _write_risk_table(
        args,
        val if test is None else test,
        result.policy,
        UNDISCOUNTED,
        manifest,
    )
    write_json(
        {
            "best_iteration": result.best_iteration,
            "iteration_bounds": result.iteration_bounds,
            "bound": result.bound.to_dict(),
            "test_bound": (
                None
                if result.test_bound is None
                else result.test_bound.to_dict()
            ),
        },
        manifest,
        args.out,
    )


def _safety_spec(
    args: argparse.Namespace, rho_minus: Optional[float] = None
) -> SafetySpec:
    return SafetySpec(
        rho_minus=args.rho_minus if rho_minus is None else rho_minus,
        delta=args.delta,
        method=BoundMethod(args.method),
        estimator=Estimator(args.estimator),
        bootstrap_b=args.bootstrap,
        seed=args.seed,
    )


def _search_config(args: argparse.Namespace) -> CandidateSearchConfig:
    return CandidateSearchConfig(
        variant=CandidateVariant(args.variant),
        k=args.k,
        budget=args.budget,
        seed=args.seed,
        workers=args.workers,
    )


def _improve_splits(args: argparse.Namespace) -> Tuple[Dataset, Dataset]:
    if args.input is not None:
        if args.test is not None:
            raise ValueError("--test goes with --train, not with --in")
        return split_data(read_jsonl(args.input))
    if args.test is None:
        raise ValueError("--train needs --test")
    _check_disjoint(args, "train", "test")
    return read_jsonl(args.train), read_jsonl(args.test)


def cmd_improve(args: argparse.Namespace) -> None:
    train, test = _improve_splits(args)
    pi0 = load_policy_json(args.policy)
    result = improve(
        train,
        test,
        pi0,
        _safety_spec(args),
        _search_config(args),
        seed=args.seed,
    )
    write_json(
        {
            "status": "accepted" if result.accepted else "NSF",
            "rho_minus": result.rho_minus,
            "bound": result.bound.to_dict(),
            "n_train": train.n,
            "n_test": test.n,
            "policy": (
                result.candidate.to_dict() if result.accepted else None
            ),
        },
        _manifest(args, ["input", "train", "test", "policy"]),
        args.out,
    )


def cmd_daedalus(args: argparse.Namespace) -> None:
    env = load_env(args.env)
    if args.policy is None:
        pi0 = TabularPolicy(np.full(env.n_actions, 1.0 / env.n_actions))
    else:
        pi0 = load_policy_json(args.policy)
    rho_minus = args.rho_minus
    if rho_minus is None:
        rho_minus = exact_value(env, pi0)
        logger.info("Safety floor is the initial value %g", rho_minus)
    run = daedalus(
        env,
        pi0,
        _safety_spec(args, rho_minus),
        betas=args.beta,
        variant=DaedalusVariant(args.daedalus_variant),
        cfg=_search_config(args),
        seed=args.seed,
        iterations=args.iterations,
    )
    write_json(
        {
            "rho_minus": rho_minus,
            "first_acceptance": run.first_acceptance,
            "iterations": [entry.to_dict() for entry in run.log],
        },
        _manifest(args, ["env", "policy"]),
        args.out,
    )


def cmd_nope(args: argparse.Namespace) -> None:
    data = read_jsonl(args.input)
    pi_e = load_policy_json(args.policy)
    rmse_tsp, rmse_std, report = rolling_compare(
        data,
        pi_e,
        args.bin,
        Estimator(args.estimator),
        by_time=args.by_time,
        workers=args.workers,
    )
    write_csv(
        report,
        _manifest(args, ["input", "policy"]),
        args.out,
        {"rmse_tsp": rmse_tsp, "rmse_standard": rmse_std},
    )


def cmd_pst_fit(args: argparse.Namespace) -> None:
    sequences = read_sequences(args.input)
    if args.select:
        pst, table = select_pst(
            sequences,
            depths=range(args.depth + 1),
            min_counts=(args.min_count,),
            prune_epsilon=args.prune,
        )
        selection = table.to_dict(orient="records")
    else:
        pst = pst_fit(sequences, args.depth, args.min_count, args.prune)
        selection = None
    write_json(
        {"pst": pst.to_dict(), "selection": selection},
        _manifest(args, ["input"]),
        args.out,
    )


def cmd_psrl(args: argparse.Namespace) -> None:
    pst = read_json(args.pst, _pst_from_json)
    if args.desirability is None:
        reward_spec = RewardSpec.from_pst(
            pst, args.action_cost, args.fatigue_cost
        )
    else:
        reward_spec = RewardSpec(
            tuple(args.desirability), args.action_cost, args.fatigue_cost
        )
    family = ThetaFamily(args.thetas)
    theta_star = args.theta_star
    if theta_star is None:
        theta_star = family.draw(args.seed)
        logger.info("Drew theta* = %s from the prior", theta_star)
    common = (pst, family, theta_star, reward_spec, args.T, args.seed)
    manifest = _manifest(args, ["pst"])
    if args.agent == "compare":
        table, cadence = compare_psrl(
            *common, gamma=args.gamma, workers=args.workers
        )
        write_csv(
            table.reset_index().rename(columns={"index": "agent"}),
            manifest,
            args.out,
            {
                "theta_star": theta_star,
                "cadence": cadence.to_dict(orient="records"),
            },
        )
        return
    runner = ds_psrl if args.agent == "ds" else greedy_thompson
    run = runner(*common, gamma=args.gamma, workers=args.workers)
    write_csv(
        run.to_frame(),
        manifest,
        args.out,
        {"theta_star": theta_star, **run.to_dict()},
    )


def cmd_capacity(args: argparse.Namespace) -> None:
    family = read_json(args.family, TypedMdpFamily.from_dict)
    caps = read_json(args.caps, CapacitySpec.from_dict)
    result = column_generation(
        [family] * args.agents,
        caps,
        max_iter=args.max_iter,
        planner=args.planner,
        p=args.min_prob,
        alpha=args.shape,
        backend=args.backend,
        workers=args.workers,
    )
    manifest = _manifest(args, ["family", "caps"])
    if args.mix_out is not None:
        write_csv(result.mix_frame(), manifest, args.mix_out)
    write_csv(
        result.load_frame(caps),
        manifest,
        args.out,
        {
            "objective": result.objective,
            "iterations": result.iterations,
            "history": result.history,
        },
    )


def cmd_sim(args: argparse.Namespace) -> None:
    env = load_env(args.env)
    policy = load_policy_json(args.policy)
    data = simulate(
        env,
        policy,
        args.n,
        args.seed,
        behavior_id=Path(args.policy).stem,
        workers=args.workers,
    )
    manifest = _manifest(args, ["env", "policy"])
    with _output(args.out) as f:
        dump_jsonl(data, f, _jsonable(manifest.to_dict()))


def cmd_calibrate_fig1(args: argparse.Namespace) -> None:
    table = error_rate_experiment(
        GammaSpec(),
        n_grid=args.n_grid,
        trials=args.trials,
        delta=args.delta,
        seed=args.seed,
        methods=args.methods,
        bootstrap_b=args.bootstrap,
        workers=args.workers,
    )
    write_csv(table, _manifest(args, []), args.out)


def _add_common(parser: argparse.ArgumentParser, seeded: bool) -> None:
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v info, -vv debug"
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=default_workers(),
        help="worker threads (outputs do not depend on this)",
    )
    parser.add_argument("--out", default="-", help="output file, - stdout")
    if seeded:
        parser.add_argument("--seed", type=int, required=True)


def _add_bound_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--delta", type=float, default=0.05)
    parser.add_argument(
        "--method", choices=[m.value for m in BoundMethod], default="tt"
    )
    parser.add_argument(
        "--estimator",
        choices=[e.value for e in Estimator],
        default="psis",
    )
    parser.add_argument("--bootstrap", type=int, default=DEFAULT_BOOTSTRAP)


def _add_search_flags(
    parser: argparse.ArgumentParser,
    variant_flag: str = "--variant",
    rho_required: bool = True,
) -> None:
    parser.add_argument(
        "--rho-minus",
        type=float,
        required=rho_required,
        default=None,
        help="safety floor",
    )
    parser.add_argument(
        variant_flag,
        dest="variant",
        choices=[v.value for v in CandidateVariant],
        default="kfold",
        help="candidate search",
    )
    parser.add_argument("--k", type=int, default=None, help="folds")
    parser.add_argument("--budget", type=int, default=600)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saferec",
        description="High-confidence off-policy evaluation and safe "
        "improvement of recommendation policies",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="lower bound on a policy's value")
    _add_common(p, seeded=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--m", type=int, default=None, help="prediction size")
    p.add_argument(
        "--risk-table", default=None, help="CSV of the bound against delta"
    )
    _add_bound_flags(p)
    p.set_defaults(func=cmd_bound, command_path="bound")

    p = sub.add_parser("fqi", help="fitted Q iteration for lifetime value")
    _add_common(p, seeded=True)
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--K", type=int, default=10, help="iterations")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--keep-fraction", type=float, default=1.0)
    p.add_argument(
        "--regressor",
        choices=[r.value for r in RegressorKind],
        default="tabular",
    )
    p.add_argument("--model-out", default=None)
    p.add_argument(
        "--risk-table",
        default=None,
        help="CSV of the chosen policy's bound against delta",
    )
    _add_bound_flags(p)
    p.set_defaults(func=cmd_fqi, command_path="fqi")

    p = sub.add_parser("improve", help="safe policy improvement")
    _add_common(p, seeded=True)
    splits = p.add_mutually_exclusive_group(required=True)
    splits.add_argument("--train", help="candidate selection log")
    splits.add_argument(
        "--in", dest="input", help="single log, split 20/80 into train/test"
    )
    p.add_argument("--test", default=None, help="safety test log")
    p.add_argument("--policy", required=True, help="behavior policy JSON")
    _add_bound_flags(p)
    _add_search_flags(p)
    p.set_defaults(
        func=cmd_improve, command_path="improve", estimator="is"
    )

    p = sub.add_parser("daedalus", help="incremental safe improvement")
    _add_common(p, seeded=True)
    p.add_argument("--env", required=True, help="env JSON or builtin name")
    p.add_argument(
        "--policy", default=None, help="initial policy; uniform when omitted"
    )
    p.add_argument("--beta", type=_ints, default=[50])
    p.add_argument(
        "--variant",
        dest="daedalus_variant",
        choices=[v.value for v in DaedalusVariant],
        default="d2",
    )
    p.add_argument(
        "--iters", "--iterations", dest="iterations", type=int, default=10
    )
    _add_bound_flags(p)
    _add_search_flags(p, variant_flag="--search", rho_required=False)
    p.set_defaults(
        func=cmd_daedalus, command_path="daedalus", estimator="is"
    )

    p = sub.add_parser("nope", help="forecast non-stationary performance")
    _add_common(p, seeded=False)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--bin", type=float, default=1)
    p.add_argument("--by-time", action="store_true")
    p.add_argument(
        "--estimator", choices=[e.value for e in Estimator], default="is"
    )
    p.set_defaults(func=cmd_nope, command_path="nope")

    p = sub.add_parser("pst", help="probabilistic suffix trees")
    pst_sub = p.add_subparsers(dest="pst_command", required=True)
    q = pst_sub.add_parser("fit", help="fit a tree to symbol sequences")
    _add_common(q, seeded=False)
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--depth", type=int, default=2)
    q.add_argument("--min-count", type=int, default=2)
    q.add_argument("--prune", type=float, default=0.0)
    q.add_argument(
        "--select",
        action="store_true",
        help="choose the depth up to --depth by AICc",
    )
    q.set_defaults(func=cmd_pst_fit, command_path="pst fit")

    p = sub.add_parser("psrl", help="posterior sampling on a suffix tree")
    _add_common(p, seeded=True)
    p.add_argument("--pst", required=True)
    p.add_argument("--thetas", type=_floats, default=[1.0, 10.0, 20.0])
    p.add_argument(
        "--theta-star",
        type=float,
        default=None,
        help="true theta; drawn from the grid with --seed when omitted",
    )
    p.add_argument("--T", type=int, default=10000)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--desirability", type=_floats, default=None)
    p.add_argument("--action-cost", type=float, default=0.2)
    p.add_argument("--fatigue-cost", type=float, default=0.4)
    p.add_argument(
        "--agent", choices=["ds", "greedy", "compare"], default="ds"
    )
    p.set_defaults(func=cmd_psrl, command_path="psrl")

    p = sub.add_parser("capacity", help="capacity-aware joint planning")
    _add_common(p, seeded=False)
    p.add_argument("--family", required=True)
    p.add_argument("--caps", required=True)
    p.add_argument("--agents", type=int, required=True)
    p.add_argument("--planner", choices=["belief", "mdp"], default="belief")
    p.add_argument(
        "--backend", choices=["simplex", "highs"], default="simplex"
    )
    p.add_argument("--min-prob", type=float, default=0.01)
    p.add_argument("--shape", type=float, default=10.0)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--mix-out", default=None)
    p.set_defaults(func=cmd_capacity, command_path="capacity")

    p = sub.add_parser("sim", help="generate logged trajectories")
    _add_common(p, seeded=True)
    p.add_argument("--env", required=True, help="env JSON or builtin name")
    p.add_argument("--policy", required=True)
    p.add_argument("--n", type=int, required=True)
    p.set_defaults(func=cmd_sim, command_path="sim")

    p = sub.add_parser("calibrate", help="bound calibration experiments")
    cal_sub = p.add_subparsers(dest="calibration", required=True)
    q = cal_sub.add_parser(
        "fig1", aliases=["error-rates"], help="error rates on gamma samples"
    )
    _add_common(q, seeded=True)
    q.add_argument(
        "--trials",
        type=int,
        default=CLI_TRIALS,
        help="trials per sample size; 10000 gives the full table",
    )
    q.add_argument(
        "--methods",
        type=_methods,
        default=list(BoundMethod),
        help="comma-separated subset of ci,tt,bca",
    )
    q.add_argument("--delta", type=float, default=0.05)
    q.add_argument("--bootstrap", type=int, default=DEFAULT_BOOTSTRAP)
    q.add_argument("--n-grid", type=_ints, default=list(ERROR_RATE_N_GRID))
    q.set_defaults(func=cmd_calibrate_fig1, command_path="calibrate fig1")

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    level = {0: logging.WARNING, 1: logging.INFO}.get(
        args.verbose, logging.DEBUG
    )
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except SaferecError as e:
        logger.error("%s", e)
        print(f"saferec: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"saferec: error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"saferec: usage error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
