"""Command-line entry point.

One executable, ``phylocomb``, exposing the library over subcommands:

    count, prob, sample, sim (yule|kingman|gw|splitting), contour,
    reduce, comb (dist|tree), cpp (sim|density|loglik|bottleneck|pd|fit),
    selftest

Conventions, applied uniformly:

- exact probabilities print a fraction line followed by a decimal line;
- stochastic text output carries a ``# seed=<n>`` comment line and JSON
  output carries a ``"seed"`` key, so every random artifact names the
  stream that produced it;
- replicate k draws from its own generator seeded by (seed, k); the
  ``PHYLOCOMB_THREADS`` worker cap therefore never changes output, and
  a fixed seed plus fixed flags is byte-identical across runs;
- exit codes: 0 success, 2 usage error, 3 numeric failure or malformed
  input file;
- no interactive mode; outputs are files or pipes.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import __version__, chrono, coalescent, combs, exact, generators, splitting, trees


@dataclass(frozen=True)
class RunConfig:
    """Resolved run settings shared by the subcommand handlers."""

    subcommand: str
    seed: Optional[int] = None
    reps: int = 1
    step: Optional[float] = None
    fmt: str = "json"
    tolerances: dict = field(default_factory=dict)


class _UsageError(Exception):
    """Flag combination that argparse alone cannot reject."""


# ---------------------------------------------------------------- plumbing


def _seed64(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}")
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return n


def _floats(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _assignments(pairs):
    out = {}
    for pair in pairs or ():
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise _UsageError(f"expected name=value, got {pair!r}")
        try:
            out[name] = float(value)
        except ValueError:
            raise _UsageError(f"non-numeric value in {pair!r}")
    return out


def _rep_rng(seed, rep):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, rep])))


def _thread_cap():
    raw = os.environ.get("PHYLOCOMB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PHYLOCOMB_THREADS must be an integer, got {raw!r}")
    return max(1, n)


def _map_reps(fn, reps):
    # each replicate owns its generator, so mapping order is irrelevant
    # and reassembly in index order keeps output byte-identical
    cap = min(_thread_cap(), reps)
    if cap <= 1:
        return [fn(i) for i in range(reps)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=cap) as pool:
        return list(pool.map(fn, range(reps)))


def _read_input(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as e:
        raise ValueError(f"cannot read {path}: {e.strerror or e}")


def _depths_from_args(args):
    if args.depths is not None and args.input is not None:
        raise _UsageError("give either --depths or --input, not both")
    if args.depths is not None:
        return tuple(args.depths)
    if args.input is not None:
        vals = []
        for line in _read_input(args.input).splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals.append(float(line))
        return tuple(vals)
    raise _UsageError("one of --depths or --input is required")


def _attach_ranks(t, ranks):
    """Rank the split nodes in preorder (parent first, left to right)."""
    seq = iter(ranks)

    def go(node):
        if node.is_leaf:
            return node
        try:
            r = next(seq)
        except StopIteration:
            raise ValueError("fewer ranks than split nodes")
        a, b = node.children
        return trees.split(go(a), go(b), rank=r)

    out = go(t)
    leftovers = sum(1 for _ in seq)
    if leftovers:
        raise ValueError("more ranks than split nodes")
    return out


def _scale_from_args(args):
    return coalescent.scale_bd(args.b, args.d)


def _grid(horizon, points):
    if points < 2:
        raise _UsageError("--points must be at least 2")
    return np.linspace(0.0, horizon, points)


def _csv_lines(header, rows):
    out = [header]
    out.extend(",".join(repr(float(v)) for v in row) for row in rows)
    return "\n".join(out)


# ------------------------------------------------------------- subcommands


def _cmd_count(args, cfg):
    if args.kind == "labelled":
        value = exact.t_count(args.n)
    elif args.kind == "ranked_labelled":
        value = exact.r_count(args.n)
    else:
        value = len(trees.enumerate_trees(args.n, args.kind))
    return str(value)


def _cmd_prob(args, cfg):
    if args.newick is not None:
        text = args.newick
    elif args.input is not None:
        text = _read_input(args.input)
    else:
        raise _UsageError("one of --newick or --input is required")
    t = trees.from_newick(text)
    if args.ranks is not None:
        t = _attach_ranks(t, args.ranks)
    model = {"pda": exact.PDA, "erm": exact.ERM, "urt": exact.URT}[args.model]
    p = exact.shape_probability(t, model)
    return f"{p}\n{float(p)!r}"


def _cmd_sample(args, cfg):
    if args.model == "urt":
        draw = lambda rng: generators.sample_yule(args.n, 1.0, rng).tree
    else:
        law = splitting.SplitLaw.pda() if args.model == "pda" else splitting.SplitLaw.erm()
        draw = lambda rng: splitting.sample_mbm(args.n, law, rng)
    out = _map_reps(lambda k: draw(_rep_rng(cfg.seed, k)), cfg.reps)
    lines = [f"# seed={cfg.seed}"]
    if cfg.fmt == "newick":
        lines.extend(trees.to_newick(t) for t in out)
    else:
        lines.append("rep,code")
        lines.extend(f"{k},{trees.canonical_code(t)}" for k, t in enumerate(out))
    return "\n".join(lines)


def _timed_payload(tt):
    return {
        "newick": trees.to_newick(tt.tree),
        "times": [float(x) for x in tt.times],
        "horizon": float(tt.horizon),
    }


def _cmd_sim(args, cfg):
    if args.model in ("yule", "kingman"):
        sampler = generators.sample_yule if args.model == "yule" else generators.sample_kingman
        out = _map_reps(lambda k: sampler(args.n, args.rate, _rep_rng(cfg.seed, k)), cfg.reps)
        if cfg.fmt == "json":
            doc = {"seed": cfg.seed, "model": args.model,
                   "reps": [_timed_payload(tt) for tt in out]}
            return json.dumps(doc, indent=1)
        if cfg.fmt == "newick":
            return "\n".join([f"# seed={cfg.seed}"]
                             + [trees.to_newick(tt.tree) for tt in out])
        rows = [(k, tt.n_tips, tt.horizon) for k, tt in enumerate(out)]
        return "\n".join([f"# seed={cfg.seed}", "rep,n_tips,horizon"]
                         + [f"{k},{n},{float(h)!r}" for k, n, h in rows])

    if args.model == "gw":
        if args.n is not None:
            draw = lambda rng: generators.sample_gw_conditioned(args.n, args.p, rng)
        else:
            if cfg.fmt == "newick":
                raise _UsageError("newick output for gw requires --n (extinct "
                                  "trees have no newick form)")
            draw = lambda rng: generators.sample_gw_binary(args.p, rng)
        out = _map_reps(lambda k: draw(_rep_rng(cfg.seed, k)), cfg.reps)
        if cfg.fmt == "json":
            doc = {"seed": cfg.seed, "model": "gw",
                   "reps": [None if t is None else trees.to_newick(t) for t in out]}
            return json.dumps(doc, indent=1)
        if cfg.fmt == "newick":
            return "\n".join([f"# seed={cfg.seed}"]
                             + [trees.to_newick(t) for t in out])
        return "\n".join([f"# seed={cfg.seed}", "rep,n_tips"]
                         + [f"{k},{0 if t is None else t.n_leaves}"
                            for k, t in enumerate(out)])

    # splitting trees
    if args.lifespan == "exponential":
        model = chrono.exponential_lifespan(args.b, args.d)
    elif args.lifespan == "fixed":
        model = chrono.fixed_lifespan(args.b, args.x)
    else:
        model = chrono.uniform_lifespan(args.b, args.scale)
    out = _map_reps(
        lambda k: chrono.sample_splitting_tree(model, args.horizon, _rep_rng(cfg.seed, k)),
        cfg.reps,
    )
    doc = {
        "seed": cfg.seed,
        "model": "splitting",
        "lifespan": args.lifespan,
        "horizon": args.horizon,
        "trees": [None if t is None else json.loads(t.to_json()) for t in out],
    }
    return json.dumps(doc, indent=1)


def _tree_from_document(text, rep):
    doc = json.loads(text)
    if isinstance(doc, dict):
        seq = doc.get("trees")
        if not isinstance(seq, list):
            raise ValueError("expected a 'trees' array in the input document")
        if not 0 <= rep < len(seq):
            raise ValueError(f"replicate {rep} not in the input (has {len(seq)})")
        if seq[rep] is None:
            raise ValueError(f"replicate {rep} went extinct; nothing to trace")
        doc = seq[rep]
    return chrono.ChronologicalTree.from_json(json.dumps(doc))


def _cmd_contour(args, cfg):
    tree = _tree_from_document(_read_input(args.input), args.rep)
    return chrono.contour(tree).to_csv().rstrip("\r\n")


def _cmd_reduce(args, cfg):
    text = _read_input(args.input)
    head = text.lstrip()[:1]
    if head in ("{", "["):
        path = chrono.contour(_tree_from_document(text, args.rep))
    else:
        path = chrono.ContourPath.from_csv(text)
    comb = chrono.reduced_comb(path, args.level)
    if comb is None:
        raise ValueError(f"empty sphere: nothing alive at level {args.level}")
    return comb.to_csv().rstrip("\r\n")


def _cmd_comb(args, cfg):
    c = combs.Comb.from_csv(_read_input(args.input))
    if args.action == "dist":
        return combs.matrix_to_csv(combs.distance_matrix(c)).rstrip("\r\n")
    tt = combs.tree_from_comb(c, args.horizon)
    if cfg.fmt == "newick":
        return trees.to_newick(tt.tree)
    return json.dumps(_timed_payload(tt), indent=1)


def _cpp_model_from_args(args):
    if args.tail is not None:
        if args.tail == "brownian":
            tail = coalescent.nu_brownian()
        else:
            if args.alpha is None or args.beta is None:
                raise _UsageError("--tail alpha requires --alpha and --beta")
            tail = coalescent.nu_alpha(args.alpha, args.beta)
        if args.cutoff is None:
            raise _UsageError("tail models require --cutoff")
        return coalescent.CPPModel(horizon=args.horizon, tail=tail)
    return coalescent.CPPModel(horizon=args.horizon, scale=_scale_from_args(args))


def _cmd_cpp_sim(args, cfg):
    model = _cpp_model_from_args(args)
    out = _map_reps(
        lambda k: coalescent.sample_cpp(model, _rep_rng(cfg.seed, k), cutoff=args.cutoff),
        cfg.reps,
    )
    if cfg.reps == 1:
        text = out[0].to_csv().rstrip("\r\n")
        return f"{text}\n# seed={cfg.seed}"
    return "\n".join([f"# seed={cfg.seed}", "rep,n_tips"]
                     + [f"{k},{int(c.M) if float(c.M).is_integer() else float(c.M)!r}"
                        for k, c in enumerate(out)])


def _cmd_cpp_density(args, cfg):
    f = coalescent.depth_density(_scale_from_args(args))
    ts = _grid(args.horizon, args.points)
    return _csv_lines("t,density", zip(ts, f(ts)))


def _cmd_cpp_loglik(args, cfg):
    sample = coalescent.DepthSample(depths=_depths_from_args(args), horizon=args.horizon)
    value = coalescent.loglik_cpp(sample, _scale_from_args(args))
    doc = {"loglik": float(value), "n_tips": sample.n_tips, "horizon": args.horizon}
    return json.dumps(doc, indent=1)


def _cmd_cpp_bottleneck(args, cfg):
    if len(args.times) != len(args.eps):
        raise _UsageError("--times and --eps must have the same length")
    sched = coalescent.BottleneckSchedule(
        times=args.times, survival_probs=args.eps, sampling=args.sampling
    )
    w = coalescent.bottleneck_transform(_scale_from_args(args), sched, horizon=args.horizon)
    ts = _grid(args.horizon, args.points)
    return _csv_lines("t,scale", zip(ts, w(ts)))


def _cmd_cpp_pd(args, cfg):
    if args.horizon.strip().lower() in ("inf", "infinity"):
        if args.method == "both":
            closed = coalescent.pd_ratio_inf(args.b, args.d, args.p)
            quadv = coalescent.pd_ratio_inf(args.b, args.d, args.p, method="quadrature")
            tol = cfg.tolerances.get("pd", 1e-6)
            if abs(closed - quadv) > tol:
                raise ValueError(
                    f"closed form {closed!r} and quadrature {quadv!r} disagree "
                    f"beyond {tol!r}"
                )
            return f"{closed!r}\n{quadv!r}"
        value = coalescent.pd_ratio_inf(args.b, args.d, args.p, method=args.method)
        return repr(float(value))
    horizon = float(args.horizon)
    if args.method == "quadrature" or args.method == "both":
        raise _UsageError("finite horizons have no closed form; omit --method")
    value = coalescent.pd_ratio(_scale_from_args(args), horizon, args.p)
    return repr(float(value))


def _cmd_cpp_fit(args, cfg):
    sample = coalescent.DepthSample(depths=_depths_from_args(args), horizon=args.horizon)
    fit = coalescent.mle_fit(
        sample,
        family=args.family,
        start=_assignments(args.start) or None,
        fixed=_assignments(args.fixed) or None,
        budget=args.budget,
        step=cfg.step,
    )
    doc = asdict(fit)
    doc["params"] = {k: float(v) for k, v in doc["params"].items()}
    if math.isnan(doc["loglik"]):
        doc["loglik"] = None
    else:
        doc["loglik"] = float(doc["loglik"])
    return json.dumps(doc, indent=1)


def _cmd_cpp(args, cfg):
    handler = {
        "sim": _cmd_cpp_sim,
        "density": _cmd_cpp_density,
        "loglik": _cmd_cpp_loglik,
        "bottleneck": _cmd_cpp_bottleneck,
        "pd": _cmd_cpp_pd,
        "fit": _cmd_cpp_fit,
    }[args.action]
    return handler(args, cfg)


def _selftest_checks():
    def counts():
        return exact.t_count(5) == 105 and exact.r_count(4) == 18, \
            f"t_5={exact.t_count(5)}, r_4={exact.r_count(4)}"

    def balanced_ranked_third():
        t = _attach_ranks(trees.from_newick("((1,2),(3,4));"), (1, 2, 3))
        p = exact.shape_probability(t, exact.URT)
        return p == Fraction(1, 3), f"got {p}"

    def ranked_law_sums_to_one():
        s = sum(exact.shape_probability(t, exact.URT)
                for t in trees.iter_trees(4, "ranked"))
        return s == 1, f"got {s}"

    def caterpillar_pushforwards():
        a = exact.shape_probability(trees.caterpillar(6), exact.PDA)
        b = exact.shape_probability(trees.caterpillar(7), exact.ERM)
        return (a, b) == (Fraction(8, 21), Fraction(2, 45)), f"got {a}, {b}"

    def enumeration_matches_closed_counts():
        ok = all(
            len(trees.enumerate_trees(n, "labelled")) == exact.t_count(n)
            for n in (3, 4, 5, 6)
        )
        return ok, "labelled enumeration vs double factorial"

    return [
        ("closed-form counts", counts),
        ("balanced ranked tree has chance 1/3", balanced_ranked_third),
        ("ranked law is normalized", ranked_law_sums_to_one),
        ("caterpillar pushforwards", caterpillar_pushforwards),
        ("enumeration cardinalities", enumeration_matches_closed_counts),
    ]


def _cmd_selftest(args, cfg):
    lines = []
    failures = 0
    for name, check in _selftest_checks():
        try:
            ok, detail = check()
        except Exception as e:  # a crash is a failure, not an abort
            ok, detail = False, f"raised {type(e).__name__}: {e}"
        if ok:
            lines.append(f"ok - {name}")
        else:
            failures += 1
            lines.append(f"FAIL - {name}: {detail}")
    total = len(lines)
    lines.append(f"{total - failures} of {total} checks passed")
    return (0 if failures == 0 else 1), "\n".join(lines)


# ------------------------------------------------------------------ parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="phylocomb",
        description="Random binary trees, their laws, and comb ultrametrics.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")

    p = sub.add_parser("count", help="count trees of a kind")
    p.add_argument("--kind", required=True,
                   choices=("shapes", "labelled", "ranked", "ranked_labelled"))
    p.add_argument("--n", type=int, required=True, help="number of tips")
    p.set_defaults(handler=_cmd_count)

    p = sub.add_parser("prob", help="exact probability of a tree under a model")
    p.add_argument("--model", required=True, choices=("pda", "erm", "urt"))
    p.add_argument("--newick", help="tree literal")
    p.add_argument("--input", help="file holding a newick string")
    p.add_argument("--ranks", type=_ints,
                   help="split ranks in preorder, e.g. 1,2,3")
    p.set_defaults(handler=_cmd_prob)

    p = sub.add_parser("sample", help="draw trees from an exact model")
    p.add_argument("--model", required=True, choices=("pda", "erm", "urt"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=_seed64, required=True)
    p.add_argument("--format", default="newick", choices=("newick", "csv"))
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("sim", help="run a stochastic simulator")
    p.add_argument("model", choices=("yule", "kingman", "gw", "splitting"))
    p.add_argument("--n", type=int, help="tip count (gw: condition on it)")
    p.add_argument("--rate", type=float, default=1.0,
                   help="per-lineage or per-pair rate (yule, kingman)")
    p.add_argument("--p", type=float, help="offspring success chance (gw)")
    p.add_argument("--b", type=float, help="birth rate (splitting)")
    p.add_argument("--d", type=float, default=0.0, help="death rate (splitting)")
    p.add_argument("--x", type=float, help="fixed lifetime (splitting)")
    p.add_argument("--scale", type=float, default=1.0,
                   help="uniform lifetime scale (splitting)")
    p.add_argument("--lifespan", default="exponential",
                   choices=("exponential", "fixed", "uniform"))
    p.add_argument("--horizon", type=float, help="truncation height (splitting)")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=_seed64, required=True)
    p.add_argument("--format", default="json", choices=("json", "csv", "newick"))
    p.set_defaults(handler=_cmd_sim)

    p = sub.add_parser("contour", help="trace a stored tree into its contour path")
    p.add_argument("--input", required=True, help="tree document (sim splitting output)")
    p.add_argument("--rep", type=int, default=0, help="replicate to trace")
    p.set_defaults(handler=_cmd_contour)

    p = sub.add_parser("reduce", help="comb of the individuals alive at a level")
    p.add_argument("--input", required=True, help="contour csv or tree document")
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--level", type=float, required=True,
                   help="sphere height; must match the simulation horizon")
    p.set_defaults(handler=_cmd_reduce)

    p = sub.add_parser("comb", help="comb utilities")
    p.add_argument("action", choices=("dist", "tree"))
    p.add_argument("--input", required=True, help="comb csv file")
    p.add_argument("--horizon", type=float, help="tree height (tree action)")
    p.add_argument("--format", default="json", choices=("json", "newick"))
    p.set_defaults(handler=_cmd_comb)

    p = sub.add_parser("cpp", help="coalescent point process toolbox")
    p.add_argument("action",
                   choices=("sim", "density", "loglik", "bottleneck", "pd", "fit"))
    p.add_argument("--b", type=float, help="birth rate")
    p.add_argument("--d", type=float, default=0.0, help="death rate")
    p.add_argument("--horizon", help="tree height (a number, or inf for pd)")
    p.add_argument("--cutoff", type=float, help="lowest resolvable depth (tail models)")
    p.add_argument("--tail", choices=("brownian", "alpha"),
                   help="sample from a depth-tail intensity instead of a scale")
    p.add_argument("--alpha", type=float, help="clock rate for --tail alpha")
    p.add_argument("--beta", type=float, help="mass scale for --tail alpha")
    p.add_argument("--p", type=float, help="tip survival chance (pd)")
    p.add_argument("--method", default="closed",
                   choices=("closed", "quadrature", "both"))
    p.add_argument("--times", type=_floats, default=(), help="bottleneck depths")
    p.add_argument("--eps", type=_floats, default=(), help="bottleneck survival odds")
    p.add_argument("--sampling", type=float, help="depth-zero sampling chance")
    p.add_argument("--points", type=int, default=200, help="grid rows to print")
    p.add_argument("--depths", type=_floats, help="node depths, comma separated")
    p.add_argument("--input", help="file of node depths, one per line")
    p.add_argument("--family", default="bd", choices=("bd", "lifespan_gamma"))
    p.add_argument("--fixed", action="append", metavar="NAME=VALUE",
                   help="pin a parameter (repeatable)")
    p.add_argument("--start", action="append", metavar="NAME=VALUE",
                   help="override a starting value (repeatable)")
    p.add_argument("--budget", type=int, default=500, help="optimizer iterations")
    p.add_argument("--grid-step", type=float, dest="grid_step",
                   help="solver step for lifespan families")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=_seed64, help="required by cpp sim")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE",
                   help="tolerance override, e.g. pd=1e-8 (repeatable)")
    p.set_defaults(handler=_cmd_cpp)

    p = sub.add_parser("selftest", help="run the exact-arithmetic golden suite")
    p.set_defaults(handler=_cmd_selftest)

    return parser


def _config_from(args):
    tol = {}
    if getattr(args, "tol", None):
        tol = _assignments(args.tol)
    return RunConfig(
        subcommand=args.subcommand,
        seed=getattr(args, "seed", None),
        reps=max(1, getattr(args, "reps", 1) or 1),
        step=getattr(args, "grid_step", None),
        fmt=getattr(args, "format", "json"),
        tolerances=tol,
    )


def _validate(args):
    sc = args.subcommand
    if sc == "sim":
        if args.model in ("yule", "kingman") and args.n is None:
            raise _UsageError(f"sim {args.model} requires --n")
        if args.model == "gw" and args.p is None:
            raise _UsageError("sim gw requires --p")
        if args.model == "splitting":
            if args.b is None or args.horizon is None:
                raise _UsageError("sim splitting requires --b and --horizon")
            if args.lifespan == "exponential" and not args.d > 0:
                raise _UsageError("sim splitting --lifespan exponential requires --d > 0")
            if args.lifespan == "fixed" and args.x is None:
                raise _UsageError("sim splitting --lifespan fixed requires --x")
            if args.format != "json":
                raise _UsageError("sim splitting emits json only")
    elif sc == "comb":
        if args.action == "tree" and args.horizon is None:
            raise _UsageError("comb tree requires --horizon")
    elif sc == "cpp":
        needs_scale = args.action in ("density", "loglik", "bottleneck", "fit") or (
            args.action in ("sim", "pd") and args.tail is None
        )
        if needs_scale and args.action != "fit" and args.b is None:
            raise _UsageError(f"cpp {args.action} requires --b")
        if args.action != "pd":
            if args.horizon is None:
                raise _UsageError(f"cpp {args.action} requires --horizon")
            try:
                args.horizon = float(args.horizon)
            except ValueError:
                raise _UsageError(f"--horizon must be a number, got {args.horizon!r}")
        else:
            if args.horizon is None:
                raise _UsageError("cpp pd requires --horizon (a number or inf)")
            if args.p is None:
                raise _UsageError("cpp pd requires --p")
            if args.b is None:
                raise _UsageError("cpp pd requires --b")
        if args.action == "sim" and args.seed is None:
            raise _UsageError("cpp sim requires --seed")


def dispatch(argv=None):
    """Parse argv, run the subcommand, print its output, return the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        _validate(args)
        cfg = _config_from(args)
        result = args.handler(args, cfg)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, RuntimeError, OverflowError, ZeroDivisionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    if isinstance(result, tuple):
        code, text = result
    else:
        code, text = 0, result
    if text:
        print(text)
    return code


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
