"""Command-line interface: ``stochctl {check,synthesize,analyze,simulate,casestudy}``.

Exit codes: 0 success, 2 parse or validation error, 3 unsupported
specification, 4 no convergence.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys

import numpy as np

from . import io
from .automata import Buchi, Rabin, load_automaton
from .config import load_model
from .errors import ConvergenceError, ParseError, UnsupportedError, ValidationError
from .ltl import (
    Always,
    And,
    Atom,
    Eventually,
    FalseF,
    FragmentClass,
    Not,
    Or,
    TrueF,
    classify,
    parse_ltl,
    scltl_to_dfa,
    to_nnf,
)
from .persistence import buchi_value, persistence_value
from .powernet import SCENARIOS, bundled_path, run_case_study
from .product import compose, target_sets
from .reachability import (
    DIVERGED,
    LOWER_ESTIMATE,
    ExcessiveCertificate,
    ReachSpec,
    absorbing_analysis,
    reach_bounded,
    reach_unbounded,
    truncated_reach,
)

EXIT_INVALID = 2
EXIT_UNSUPPORTED = 3
EXIT_DIVERGED = 4


def _resolve(path):
    """Accept a path or the bare name of a bundled file."""
    if path is None or os.path.exists(path):
        return path
    bundled = bundled_path(os.path.basename(path))
    return bundled if os.path.exists(bundled) else path


def _horizon(text):
    if text is None or text == "inf":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("horizon must be a non-negative integer or 'inf'") from None
    if n < 0:
        raise argparse.ArgumentTypeError("horizon must be non-negative")
    return n


def _load_model_for(args, alphabet=None):
    if args.model:
        return load_model(_resolve(args.model))
    if alphabet is not None:
        for scenario in SCENARIOS:
            path = bundled_path(f"powernet_{scenario}.cfg")
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
            letters = _cfg_alphabet(text)
            if letters == tuple(alphabet):
                return load_model(path)
    raise ValidationError("--model is required")


def _cfg_alphabet(text):
    import configparser

    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    sec = cp["labels"]
    return tuple(k for k in sec if k != "default") + (sec["default"].strip(),)


def _propositional(f):
    if isinstance(f, (Atom, TrueF, FalseF)):
        return True
    if isinstance(f, Not):
        return _propositional(f.arg)
    if isinstance(f, (And, Or)):
        return _propositional(f.left) and _propositional(f.right)
    return False


def _letter_mask(f, labeling):
    """States whose letter satisfies a propositional formula."""
    n = len(labeling.labels)
    if isinstance(f, TrueF):
        return np.ones(n, bool)
    if isinstance(f, FalseF):
        return np.zeros(n, bool)
    if isinstance(f, Atom):
        return labeling.mask(f.letter)
    if isinstance(f, Not):
        return ~_letter_mask(f.arg, labeling)
    if isinstance(f, And):
        return _letter_mask(f.left, labeling) & _letter_mask(f.right, labeling)
    return _letter_mask(f.left, labeling) | _letter_mask(f.right, labeling)


def _initial_value(model, values, args):
    if getattr(args, "x0", None):
        return float(values[_parse_x0(model, args.x0)])
    return float(np.mean(values))


def _parse_x0(model, text):
    if model.grid is None:
        x = int(text)
        if not 0 <= x < model.n_states:
            raise ValidationError(f"--x0 {x} out of range")
        return x
    coords = [float(t) for t in text.split(",")]
    if len(coords) != model.grid.dims:
        raise ValidationError(f"--x0 needs {model.grid.dims} comma-separated coordinates")
    return model.grid.nearest(coords)


def _load_cert(path, n_base, n_q):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    data = np.atleast_1d(data)
    names = data.dtype.names
    g = np.full(n_base, np.nan)
    g[data["state"].astype(int)] = data["g"].astype(float)
    if np.isnan(g).any():
        raise ValidationError("certificate must give g for every state")
    sel = None
    if "action" in names:
        sel = np.zeros(n_base, dtype=np.int64)
        sel[data["state"].astype(int)] = data["action"].astype(int)
        sel = np.repeat(sel, n_q)
    return np.repeat(g, n_q), ("selector" if sel is not None else "uniform"), sel


class _Outcome:
    def __init__(self, model, values, policy, result, q=0, invert=False):
        self.model = model
        self.values = values
        self.policy = policy
        self.result = result
        self.q = q
        status = result.status
        if invert and status == LOWER_ESTIMATE:
            status = "upper-estimate"
        self.status = status
        self.bound = result.error_bound


def _solve_product(model, aut, args, direction, invert=False):
    prod = compose(model, aut)
    acc = aut.acceptance
    if isinstance(acc, Rabin):
        raise UnsupportedError("Rabin acceptance is not supported by the solvers")
    init = prod.initial_states()
    if isinstance(acc, Buchi):
        res = buchi_value(prod, direction=direction, tol=args.tol, max_iters=args.max_iters)
        vals = res.values[init]
        return _Outcome(model, 1 - vals if invert else vals, res.policy.at(0)[init], res,
                        aut.initial, invert)
    sets = target_sets(prod)
    horizon = args.horizon if args.horizon is not None else sets.horizon
    spec = ReachSpec(sets.safe, sets.goal, horizon, direction)
    if args.cert:
        g, mode, sel = _load_cert(args.cert, model.n_states, prod.n_q)
        cert = ExcessiveCertificate(g, spec.safe, mode, sel)
        res = truncated_reach(prod.model, spec, cert, args.eps, args.tol, args.max_iters, args.cap)
    elif horizon is not None:
        res = reach_bounded(prod.model, spec)
    else:
        report = None
        if direction == "min":
            report = absorbing_analysis(prod.model, spec.safe, cap=args.cap)
        res = reach_unbounded(prod.model, spec, args.tol, args.max_iters, certificate=report)
    vals = res.values[init]
    if invert:
        vals = 1.0 - vals
    return _Outcome(model, vals, res.policy.at(0)[init], res, aut.initial, invert)


def _check_ltl(args):
    model = _load_model_for(args)
    if model.labeling is None:
        raise ValidationError("the model has no [labels] section")
    alphabet = model.labeling.alphabet
    f = to_nnf(parse_ltl(args.ltl, alphabet))
    frag = classify(f)
    if frag in (FragmentClass.BLTL, FragmentClass.SCLTL):
        return _solve_product(model, scltl_to_dfa(f, alphabet), args, args.direction)
    if frag is FragmentClass.SLTL:
        # the negation is co-safe: P_max(f) = 1 - P_min(not f)
        neg = scltl_to_dfa(to_nnf(Not(f)), alphabet)
        flip = "min" if args.direction == "max" else "max"
        return _solve_product(model, neg, args, flip, invert=True)
    if isinstance(f, Eventually) and f.bound is None and isinstance(f.arg, Always) \
            and f.arg.bound is None and _propositional(f.arg.arg):
        if args.direction != "max":
            raise UnsupportedError("minimal persistence is not supported; use --direction max")
        safe = _letter_mask(f.arg.arg, model.labeling)
        res = persistence_value(model, safe, args.tol, args.max_iters)
        return _Outcome(model, res.values, res.policy.actions, res)
    raise UnsupportedError(
        f"formula is {frag.value}; only co-safe, bounded, safe and 'F G <letters>' formulae are supported"
    )


def _check_automaton(args):
    aut = load_automaton(_resolve(args.automaton))
    model = _load_model_for(args, aut.alphabet)
    if model.labeling is None:
        raise ValidationError("the model has no [labels] section")
    return _solve_product(model, aut, args, args.direction)


def cmd_check(args):
    if (args.ltl is None) == (args.automaton is None):
        raise ValidationError("give exactly one of --ltl or --automaton")
    out = _check_ltl(args) if args.ltl is not None else _check_automaton(args)
    if args.out:
        io.write_values(os.path.join(args.out, "values.csv"), out.model, out.values, q=out.q)
        io.write_policy(os.path.join(args.out, "policy.csv"), out.model, out.policy, q=out.q)
        io.write_residuals(os.path.join(args.out, "residuals.csv"), out.result.residuals)
    value = _initial_value(out.model, out.values, args)
    bound = "none" if out.bound is None else "%.17g" % out.bound
    print(f"value={value:.17g} bound={bound} status={out.status}")
    return EXIT_DIVERGED if out.status == DIVERGED else 0


def cmd_analyze(args):
    model = _load_model_for(args)
    letters = [s.strip() for s in args.safe.split(",") if s.strip()]
    safe = model.labeling.mask(*letters)
    rep = absorbing_analysis(model, safe, cap=args.cap, mass_tol=args.mass_tol)
    sizes = " ".join(str(int(s.sum())) for s in rep.chain)
    print(f"chain_sizes={sizes}")
    print(f"s_inf={int(rep.s_inf.sum())} stabilized={rep.stabilized}")
    m = "inf" if rep.m is None else rep.m
    beta = "none" if rep.beta is None else "%.17g" % rep.beta
    print(f"m={m} beta={beta} verdict={rep.verdict} consistent={rep.consistent}")
    if args.out:
        io.write_sets(os.path.join(args.out, "absorbing_sets.csv"), model, rep)
        io.write_residuals(os.path.join(args.out, "betas.csv"),
                           [1.0 - b for b in rep.betas[1:]], rep.betas)
    return 0


def cmd_simulate(args):
    from .montecarlo import SimConfig, estimate_dfa_acceptance, sample_paths, until_hits

    if args.seed is None:
        raise ValidationError("--seed is required for simulation")
    if args.horizon is None:
        raise ValidationError("simulation needs a finite --horizon")
    model = _load_model_for(args)
    x0 = _parse_x0(model, args.x0) if args.x0 else None
    initial = None if x0 is not None else np.full(model.n_states, 1.0 / model.n_states)
    cfg = SimConfig(args.seed, args.paths, max(args.horizon, 1), x0=x0, initial=initial)
    if args.ltl or args.automaton:
        if args.ltl:
            aut = scltl_to_dfa(parse_ltl(args.ltl, model.labeling.alphabet), model.labeling.alphabet)
        else:
            aut = load_automaton(_resolve(args.automaton))
        prod = compose(model, aut)
        sets = target_sets(prod)
        res = reach_bounded(prod.model, ReachSpec(sets.safe, sets.goal, args.horizon, args.direction))
        est = estimate_dfa_acceptance(model, aut, res.policy, args.horizon, cfg)
    else:
        if not args.goal:
            raise ValidationError("give --ltl, --automaton or --safe/--goal letters")
        lab = model.labeling
        goal = lab.mask(*args.goal.split(","))
        safe = lab.mask(*args.safe.split(",")) if args.safe else np.ones(model.n_states, bool)
        res = reach_bounded(model, ReachSpec(safe, goal, args.horizon, args.direction))
        batch = sample_paths(model, cfg, res.policy)
        hits = until_hits(batch.states, safe, goal, args.horizon)
        p = float(hits.mean())
        from .montecarlo import Estimate

        est = Estimate(p, float(np.sqrt(p * (1 - p) / len(hits))), len(hits))
        if args.out:
            io.write_paths(os.path.join(args.out, "paths.csv"), batch)
    print(f"estimate={est.value:.17g} stderr={est.stderr:.17g} paths={est.num_paths}")
    return 0


def cmd_casestudy(args):
    scenarios = SCENARIOS if args.scenario == "both" else (args.scenario,)
    for scenario in scenarios:
        cs = run_case_study(scenario, horizon=args.horizon, out_dir=args.out, cap=args.cap)
        for line in casestudy_summary(cs):
            print(line)
    return 0


def casestudy_summary(cs):
    """Human-readable structural checks on a case-study result."""
    model = cs.model
    centers = model.grid.centers()
    lines = []
    if cs.scenario == "safety":
        if cs.report is not None:
            lines.append(f"safety: absorbing verdict={cs.report.verdict} "
                         f"S_inf_empty={not cs.report.s_inf.any()} m={cs.report.m}")
        x = model.grid.nearest((0.85, 0.85))
        lines.append(f"safety: value at (0.85,0.85) = {cs.values[x]:.6f}")
        u = np.where(cs.policy >= 0, model.actions.vectors[cs.policy, 1], np.nan)
        q1 = (centers[:, 0] < 1.0) & (centers[:, 1] >= 1.0)
        q2 = (centers[:, 0] >= 1.0) & (centers[:, 1] < 1.0)
        lines.append(f"safety: step-{cs.step} u1=1 cells in low-x1/high-x2 = {int(np.sum(u[q1] == 1.0))}, "
                     f"u1=0 cells in high-x1/low-x2 = {int(np.sum(u[q2] == 0.0))}")
    else:
        lab = model.labeling
        g, bot = lab.mask("G"), lab.mask("BOT")
        lines.append(f"reachavoid: min value on G = {cs.values[g].min():.6f}, "
                     f"max value on BOT = {cs.values[bot].max():.6f}")
        active = cs.policy >= 0
        v = model.actions.vectors[cs.policy[active], 0]
        lines.append(f"reachavoid: non-tied cells = {int(active.sum())}, with v = 1: {int(np.sum(v == 1.0))}")
    return lines


def _threads():
    raw = os.environ.get("STOCHCTL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError("STOCHCTL_THREADS must be an integer") from None
    if n <= 0:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def build_parser():
    parser = argparse.ArgumentParser(prog="stochctl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", help="model configuration (.cfg); bundled names are accepted")
        p.add_argument("--direction", choices=("max", "min"), default="max")
        p.add_argument("--tol", type=float, default=1e-9)
        p.add_argument("--max-iters", type=int, default=10**4)
        p.add_argument("--cap", type=int, default=10**4, help="absorbing-set iteration cap")
        p.add_argument("--out", help="output directory for CSV artifacts")
        p.add_argument("--x0", help="initial state: coordinates 'a,b' on a grid, else an index")

    for name in ("check", "synthesize"):
        p = sub.add_parser(name, help="compute optimal values" if name == "check"
                           else "compute values and write the optimal policy")
        common(p)
        p.add_argument("--ltl", help="formula over the model's label alphabet")
        p.add_argument("--automaton", help="automaton file (.aut)")
        p.add_argument("--horizon", type=_horizon, default=None, help="steps, or 'inf'")
        p.add_argument("--cert", help="CSV 'state,g[,action]' excessive-function certificate")
        p.add_argument("--eps", type=float, default=1e-3, help="truncation level used with --cert")
        p.set_defaults(func=cmd_check)

    p = sub.add_parser("analyze", help="absorbing-set and contraction analysis")
    common(p)
    p.add_argument("--safe", required=True, help="comma-separated letters forming S")
    p.add_argument("--mass-tol", type=float, default=0.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte-Carlo estimate under the optimal bounded policy")
    common(p)
    p.add_argument("--ltl")
    p.add_argument("--automaton")
    p.add_argument("--safe", help="comma-separated safe letters")
    p.add_argument("--goal", help="comma-separated goal letters")
    p.add_argument("--horizon", type=_horizon, default=None)
    p.add_argument("--seed", type=int)
    p.add_argument("--paths", type=int, default=10**4)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("casestudy", help="run the bundled power-network scenarios")
    p.add_argument("--scenario", choices=SCENARIOS + ("both",), default="both")
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--cap", type=int, default=10**4)
    p.add_argument("--out", default="casestudy_out")
    p.set_defaults(func=cmd_casestudy)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with _threads():
            return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except UnsupportedError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except ConvergenceError as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
