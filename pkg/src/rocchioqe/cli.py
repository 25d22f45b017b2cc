"""Command-line interface: ``rocchioqe {score,qe,fuse,eval,sweep,synth}``."""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import itertools
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .embeddings import (
    FORMATS,
    EmbeddingSet,
    infer_format,
    l2_normalize,
    load_embeddings,
    save_embeddings,
)
from .expansion import BIDI_RULES, QEParams, QueryExpander
from .fusion import FusionParams, fuse
from .metrics import DcfParams, det_curve, evaluate
from .scorefiles import format_score, load_scores, load_trials, write_scores, write_trials
from .scoring import ScoreSet, resolve_trials, score_trials
from .synthetic import GENERATOR, CohortSpec, generate, make_trials

log = logging.getLogger("rocchioqe")

GLOBAL_DEFAULTS = {"config": None, "threads": 1, "quiet": False}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


class CLIError(Exception):
    pass


# -- config file -------------------------------------------------------------

def read_config(path) -> dict:
    """Flatten a ``key = value`` file (optional ``[section]`` headers) into a dict.

    Keys are flag names with or without leading dashes; ``-`` and ``_`` are
    interchangeable.
    """
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise CLIError(f"config {path}: {exc.message if hasattr(exc, 'message') else exc}") from None
    values = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def _to_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    token = str(value).strip().lower()
    if token in _TRUE:
        return True
    if token in _FALSE:
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {value!r}")


def _float_list(text: str) -> list:
    return [float(t) for t in str(text).replace(",", " ").split()]


def _int_list(text: str) -> list:
    out = []
    for t in str(text).replace(",", " ").split():
        v = float(t)
        if v != int(v):
            raise argparse.ArgumentTypeError(f"expected an integer, got {t!r}")
        out.append(int(v))
    return out


def _apply_config(parser: argparse.ArgumentParser, sub: argparse.ArgumentParser, values: dict) -> dict:
    known = {a.dest: a for a in sub._actions} | {a.dest: a for a in parser._actions}
    unknown = sorted(set(values) - set(known) - {"config"})
    if unknown:
        log.warning("config keys not used by this command: %s", ", ".join(unknown))
    defaults = {}
    for key, value in values.items():
        action = known.get(key)
        if action is None or key == "config":
            continue
        if action.nargs == 0:  # store_true flags
            defaults[key] = _to_bool(value)
        else:
            defaults[key] = action.type(value) if action.type else value
        action.required = False  # the config file satisfies it
    parser.set_defaults(**{k: v for k, v in defaults.items() if k in GLOBAL_DEFAULTS})
    sub.set_defaults(**{k: v for k, v in defaults.items() if k not in GLOBAL_DEFAULTS})
    return defaults


# -- output helpers ----------------------------------------------------------

@contextmanager
def _atomic_path(path):
    """Yield a temp path that replaces ``path`` only if the block succeeds."""
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_text(path, text: str) -> None:
    with _atomic_path(path) as tmp:
        Path(tmp).write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _threads(args) -> int:
    return args.threads if args.threads > 0 else (os.cpu_count() or 1)


def _load_embedding_set(args) -> EmbeddingSet:
    emb = load_embeddings(args.embeddings, args.format)
    if not args.no_normalize:
        emb = l2_normalize(emb)
    log.info("loaded %d embeddings of dimension %d from %s", len(emb), emb.dimension, args.embeddings)
    return emb


def _qe_params(args, **override) -> QEParams:
    fields = dict(alpha=args.alpha, beta=args.beta, gamma=args.gamma, top_n=args.top_n,
                  direction="bidirectional" if args.bidirectional else "one_sided",
                  bidi_rule=args.bidi_rule, exclude_trial_partner=args.exclude_trial_partner)
    fields.update(override)
    return QEParams(**fields)


def _build_expander(emb: EmbeddingSet, trials, params: QEParams, threads: int) -> QueryExpander:
    enroll, test = resolve_trials(emb, trials)
    queries = np.concatenate([enroll, test]) if params.bidirectional else enroll
    return QueryExpander.from_embeddings(emb, queries=queries, threads=threads)


# -- commands ----------------------------------------------------------------

def cmd_score(args) -> int:
    emb = _load_embedding_set(args)
    trials = load_trials(args.trials)
    scores = score_trials(emb, trials)
    with _atomic_path(args.output) as tmp:
        write_scores(scores, tmp)
    log.info("wrote %d baseline scores to %s", len(scores), args.output)
    return 0


def cmd_qe(args) -> int:
    params = _qe_params(args)
    emb = _load_embedding_set(args)
    trials = load_trials(args.trials)
    if trials:
        expander = _build_expander(emb, trials, params, _threads(args))
        scores = ScoreSet(params.label(), tuple(trials), expander.score(trials, params))
    else:
        scores = ScoreSet(params.label(), (), np.empty(0))
    with _atomic_path(args.output) as tmp:
        write_scores(scores, tmp)
    log.info("wrote %d %s scores to %s", len(scores), params.label(), args.output)
    return 0


def cmd_fuse(args) -> int:
    a = load_scores(args.score_a)
    b = load_scores(args.score_b)
    fused = fuse(a, b, FusionParams(args.lam, args.normalize))
    with _atomic_path(args.output) as tmp:
        write_scores(fused, tmp)
    log.info("wrote %d fused scores to %s", len(fused), args.output)
    return 0


def _dcf_params(args) -> DcfParams:
    return DcfParams(c_miss=args.c_miss, c_fa=args.c_fa, p_target=args.p_target)


def cmd_eval(args) -> int:
    scores = load_scores(args.scores)
    params = _dcf_params(args)
    result = evaluate(scores, params)
    if args.det:
        curve = det_curve(scores)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["threshold", "p_miss", "p_fa"])
        for t, pm, pf in curve.points():
            writer.writerow([format_score(t), format_score(pm), format_score(pf)])
        _write_text(args.det, buf.getvalue())
    _write_text(args.report, _dump_json(result.report()))
    if not args.quiet:
        print(f"{scores.system}: EER {result.eer_percent:.3f}%  minDCF {result.min_dcf:.3f}"
              f"  ({result.n_target} target / {result.n_nontarget} nontarget)")
    return 0


SWEEP_COLUMNS = ["alpha", "beta", "gamma", "top_n", "lambda", "eer_percent", "min_dcf", "status"]


def _sweep_points(args) -> list:
    qe_axes = [args.alphas, args.betas, args.gammas, args.top_ns]
    lambdas = args.lambdas or [None]
    if args.score_a:
        if any(qe_axes):
            raise CLIError("QE grid axes need --embeddings/--trials, not --score-a")
        return [(None, lam) for lam in lambdas]
    defaults = [[args.alpha], [args.beta], [args.gamma], [args.top_n]]
    axes = [ax if ax else d for ax, d in zip(qe_axes, defaults)]
    return [(qe, lam) for qe in itertools.product(*axes) for lam in lambdas]


def cmd_sweep(args) -> int:
    points = _sweep_points(args)
    if args.lambdas and not (args.score_a or args.fuse_with):
        raise CLIError("--lambdas needs --fuse-with (QE sweep) or --score-a/--score-b")
    if args.score_a and not args.score_b:
        raise CLIError("--score-a needs --score-b")
    for lam in args.lambdas or []:
        FusionParams(lam)  # validate the whole grid up front
    log.info("sweep grid: %d point(s)", len(points))
    dcf = _dcf_params(args)

    expander = trials = None
    first = second = None
    if args.score_a:
        first, second = load_scores(args.score_a), load_scores(args.score_b)
    else:
        if not (args.embeddings and args.trials):
            raise CLIError("sweep needs --embeddings and --trials, or --score-a and --score-b")
        emb = _load_embedding_set(args)
        trials = load_trials(args.trials)
        if not trials:
            raise CLIError(f"{args.trials}: empty trial list")
        if args.fuse_with:
            second = load_scores(args.fuse_with)
        # Rank both trial sides once; every grid point reuses the table.
        queries = np.concatenate(resolve_trials(emb, trials))
        expander = QueryExpander.from_embeddings(emb, queries=queries, threads=_threads(args))

    def run(point):
        qe, lam = point
        row = dict.fromkeys(SWEEP_COLUMNS)
        try:
            if qe is not None:
                row.update(alpha=qe[0], beta=qe[1], gamma=qe[2], top_n=qe[3])
                params = _qe_params(args, alpha=qe[0], beta=qe[1], gamma=qe[2], top_n=qe[3])
                system = ScoreSet(params.label(), tuple(trials), expander.score(trials, params))
            else:
                system = first
            if lam is not None:
                row["lambda"] = lam
                system = fuse(system, second, FusionParams(lam, args.normalize))
            result = evaluate(system, dcf)
            row.update(eer_percent=result.eer_percent, min_dcf=result.min_dcf, status="ok")
        except Exception as exc:  # a failed grid point is recorded, not fatal
            row["status"] = f"failed: {exc}"
        return row

    threads = _threads(args)
    if threads > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run, points))
    else:
        rows = [run(p) for p in points]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow(["" if row[c] is None else
                         (format_score(row[c]) if isinstance(row[c], float) else row[c])
                         for c in SWEEP_COLUMNS])
    report = Path(args.report)
    csv_path, json_path = report.with_suffix(".csv"), report.with_suffix(".json")
    _write_text(csv_path, buf.getvalue())
    _write_text(json_path, _dump_json({
        "grid_size": len(points),
        "direction": "bidirectional" if args.bidirectional else "one_sided",
        "bidi_rule": args.bidi_rule,
        "exclude_trial_partner": args.exclude_trial_partner,
        "normalize": args.normalize,
        "dcf_params": {"c_miss": dcf.c_miss, "c_fa": dcf.c_fa, "p_target": dcf.p_target},
        "rows": rows,
    }))
    failed = sum(r["status"] != "ok" for r in rows)
    if not args.quiet:
        print(buf.getvalue(), end="")
    if failed:
        log.warning("%d of %d grid point(s) failed", failed, len(rows))
    return 0


def cmd_synth(args) -> int:
    spec = CohortSpec(args.n_speakers, args.utts_per_speaker, args.dimension,
                      args.between_std, args.within_std, args.seed)
    emb = generate(spec)
    trial_seed = args.seed if args.trial_seed is None else args.trial_seed
    trials = make_trials(emb, args.n_target, args.n_nontarget, trial_seed)
    with _atomic_path(args.embeddings_out) as tmp:
        save_embeddings(emb, tmp, args.format or infer_format(args.embeddings_out))
    with _atomic_path(args.trials_out) as tmp:
        write_trials(trials, tmp)
    meta = {
        "generator": GENERATOR,
        "cohort": {"n_speakers": spec.n_speakers, "utts_per_speaker": spec.utts_per_speaker,
                   "dimension": spec.dimension, "between_std": spec.between_std,
                   "within_std": spec.within_std, "seed": spec.seed},
        "trials": {"n_target": args.n_target, "n_nontarget": args.n_nontarget, "seed": trial_seed},
    }
    meta_path = args.meta or f"{args.embeddings_out}.meta.json"
    _write_text(meta_path, _dump_json(meta))
    log.info("wrote %d embeddings and %d trials", len(emb), len(trials))
    return 0


# -- parser ------------------------------------------------------------------

def _add_embedding_args(p, required=True):
    p.add_argument("--embeddings", required=required, help="embedding file")
    p.add_argument("--trials", required=required, help="trial list file")
    p.add_argument("--format", choices=FORMATS, help="embedding format (default: from suffix)")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip L2 normalization of embeddings before scoring")


def _add_qe_args(p):
    p.add_argument("--alpha", type=float, default=1.0, help="weight of the original query")
    p.add_argument("--beta", type=float, default=0.0, help="weight of the relevant centroid")
    p.add_argument("--gamma", type=float, default=0.0, help="weight of the non-relevant centroid")
    p.add_argument("--top-n", type=int, default=0, help="number of neighbors treated as relevant")
    p.add_argument("--bidirectional", action="store_true", help="expand both sides of each trial")
    p.add_argument("--bidi-rule", choices=BIDI_RULES, default="mean_of_directions")
    p.add_argument("--exclude-trial-partner", action="store_true",
                   help="drop the other trial side from each utterance's neighbor list")


def _add_dcf_args(p):
    p.add_argument("--c-miss", type=float, default=1.0)
    p.add_argument("--c-fa", type=float, default=1.0)
    p.add_argument("--p-target", type=float, default=0.05)


def _add_global_args(p, defaults):
    p.add_argument("--config", default=defaults["config"],
                   help="key = value file; command-line flags take precedence")
    p.add_argument("--threads", type=int, default=defaults["threads"],
                   help="worker threads (0 = all cores, default 1)")
    p.add_argument("--quiet", action="store_true", default=defaults["quiet"],
                   help="only print warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rocchioqe",
        description="Rocchio query expansion, score fusion and EER/minDCF evaluation "
                    "for embedding-based verification trials.")
    _add_global_args(parser, GLOBAL_DEFAULTS)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    # Subcommands take the global flags too; SUPPRESS keeps them from
    # resetting values given before the subcommand name.
    common = argparse.ArgumentParser(add_help=False)
    _add_global_args(common, dict.fromkeys(GLOBAL_DEFAULTS, argparse.SUPPRESS))
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("score", parents=[common], help="baseline cosine scores for a trial list")
    _add_embedding_args(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_score)

    p = subs.add_parser("qe", parents=[common], help="query-expanded scores for a trial list")
    _add_embedding_args(p)
    _add_qe_args(p)
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_qe)

    p = subs.add_parser("fuse", parents=[common], help="lambda-weighted fusion of two score files")
    p.add_argument("--score-a", required=True, help="first system (weight lambda)")
    p.add_argument("--score-b", required=True, help="second system (weight 1 - lambda)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--normalize", default="none", choices=["none", "z", "minmax"])
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_fuse)

    p = subs.add_parser("eval", parents=[common], help="EER and minDCF of a labeled score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--report", required=True, help="JSON report path")
    p.add_argument("--det", help="optional DET points CSV (threshold,p_miss,p_fa)")
    _add_dcf_args(p)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("sweep", parents=[common], help="evaluate a grid of QE/fusion settings")
    _add_embedding_args(p, required=False)
    _add_qe_args(p)
    p.add_argument("--alphas", type=_float_list)
    p.add_argument("--betas", type=_float_list)
    p.add_argument("--gammas", type=_float_list)
    p.add_argument("--top-ns", type=_int_list)
    p.add_argument("--lambdas", type=_float_list)
    p.add_argument("--fuse-with", help="score file fused with each QE grid point (weight 1 - lambda)")
    p.add_argument("--score-a", help="fusion-only sweep: first score file")
    p.add_argument("--score-b", help="fusion-only sweep: second score file")
    p.add_argument("--normalize", default="none", choices=["none", "z", "minmax"])
    p.add_argument("--report", required=True, help="report path; .csv and .json are written")
    _add_dcf_args(p)
    p.set_defaults(func=cmd_sweep)

    p = subs.add_parser("synth", parents=[common], help="generate a synthetic cohort and trials")
    p.add_argument("--n-speakers", type=int, default=50)
    p.add_argument("--utts-per-speaker", type=int, default=10)
    p.add_argument("--dimension", type=int, default=64)
    p.add_argument("--between-std", type=float, default=1.0)
    p.add_argument("--within-std", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-target", type=int, default=500)
    p.add_argument("--n-nontarget", type=int, default=500)
    p.add_argument("--trial-seed", type=int, help="seed for trial sampling (default: --seed)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--embeddings-out", required=True)
    p.add_argument("--trials-out", required=True)
    p.add_argument("--meta", help="metadata JSON path (default: <embeddings-out>.meta.json)")
    p.set_defaults(func=cmd_synth)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(name)
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("--quiet", action="store_true")
    known, rest = pre.parse_known_args(argv)
    logging.basicConfig(level=logging.WARNING if known.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr, force=True)
    logging.captureWarnings(True)
    try:
        if known.config:
            sub = next((_subparser(parser, a) for a in rest if _subparser(parser, a)), None)
            if sub is not None:
                applied = _apply_config(parser, sub, read_config(known.config))
                if applied.get("quiet") and not known.quiet:
                    logging.getLogger().setLevel(logging.WARNING)
        args = parser.parse_args(argv)
        return args.func(args)
    except (CLIError, ValueError, KeyError, OSError, argparse.ArgumentTypeError) as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
