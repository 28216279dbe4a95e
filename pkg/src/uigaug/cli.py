"""Command-line driver: every stage reads files, writes files, and leaves a manifest behind."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .augment import ConfigError, DsConfig, MixConfig, SmpConfig, build_mix, ten_config_mix, run_pipeline
from .diversity import DiversityConfig, degreed
from .embed import (
    DistanceMetric,
    EmbeddingStore,
    MetricKind,
    embed_uig,
    hashing_embedder,
    load_store,
    save_store,
    weighted_manhattan,
)
from .ingest import (
    build_uig_oai,
    build_uig_pens,
    inject_snodes_pens,
    read_docs,
    read_gold_tsv,
    read_jsonl,
    read_news_tsv,
    read_oai_jsonl,
    read_pens_tsv,
    write_jsonl,
)
from .rank_eval import evaluate, read_scores
from .stats import (
    CORRELATIONS,
    StabilityInput,
    ambiguity_band,
    correlation_table_csv,
    diversity_accuracy_correlation,
    kappa0,
    pearson,
    rank_stability,
    squeeze_check,
)
from .summ_eval import WEIGHT_POLICIES, PersevalParams, perseval, read_instances, rouge_su4
from .uig import validate

log = logging.getLogger("uigaug")

ENV_PREFIX = "UIGAUG_"

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad flags, config or missing inputs (exit code 2)."""


# ------------------------------------------------------------------ settings

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "jobs": 1,
    "ds": {"m": 5, "gap": 2, "target_len": 150, "seg_min": 2, "seg_max": 2, "strict": False},
    "smp": {"k": 10, "lambda": 0.3, "p": 0.8, "top_p": 1, "metric": "rmsd", "all_snodes": False},
    "diversity": {"alpha": 1.0, "epsilon": 1e-8, "metric": "manhattan"},
    "embed": {"dim": 64},
    "mix": {"fraction": 0.1},
}


def _merge(base: dict, over: dict, where: str) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(out.get(k), dict):
            if not isinstance(v, dict):
                raise UsageError(f"{where}: '{k}' must be a table")
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = v
    return out


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (ValueError, OSError) as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from exc


def _coerce(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        return text


def env_overrides(environ: dict[str, str]) -> dict:
    """UIGAUG_SEED=3, UIGAUG_DS__GAP=25: double underscore separates table and key."""
    out: dict = {}
    for name, value in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        path = name[len(ENV_PREFIX) :].lower().split("__")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = _coerce(value)
    return out


def resolve_settings(args: argparse.Namespace, environ: dict[str, str] | None = None) -> dict:
    """Defaults, then config file, then environment, then explicit flags."""
    settings = DEFAULTS
    if args.config:
        settings = _merge(settings, load_config_file(args.config), str(args.config))
    settings = _merge(settings, env_overrides(dict(os.environ if environ is None else environ)), "environment")
    flags: dict = {}
    for key, value in vars(args).items():
        if value is None or "." not in key:
            continue
        table, name = key.split(".", 1)
        flags.setdefault(table, {})[name] = value
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.jobs is not None:
        flags["jobs"] = args.jobs
    return _merge(settings, flags, "flags")


def _metric(name: str) -> DistanceMetric:
    try:
        return DistanceMetric.parse(name)
    except ValueError:
        raise UsageError(f"unknown metric {name!r}") from None


def build_configs(settings: dict, smp_on: bool = True) -> tuple[DsConfig, SmpConfig | None]:
    """Validate both configs and report every problem at once."""
    problems: list[str] = []
    ds = smp = None
    d, s, seed = settings["ds"], settings["smp"], int(settings["seed"])
    try:
        ds = DsConfig(
            m=int(d["m"]),
            gap=int(d["gap"]),
            target_len=int(d["target_len"]),
            seg_len_range=(int(d["seg_min"]), int(d["seg_max"])),
            seed=seed,
            strict=bool(d["strict"]),
        )
    except ConfigError as exc:
        problems += exc.problems
    if smp_on:
        try:
            smp = SmpConfig(
                k=int(s["k"]),
                lam=float(s["lambda"]),
                p_smp=float(s["p"]),
                top_p=int(s["top_p"]),
                metric=_metric(s["metric"]),
                seed=seed,
                all_snodes=bool(s["all_snodes"]),
            )
        except ConfigError as exc:
            problems += exc.problems
    if problems:
        raise UsageError("invalid configuration:\n  " + "\n  ".join(problems))
    return ds, smp


# ------------------------------------------------------------------ manifest


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _input_files(paths) -> dict[str, str]:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for f in sorted(p.iterdir()):
                if f.is_file() and f.name != "manifest.json":
                    out[str(f)] = sha256_file(f)
        elif p.exists():
            out[str(p)] = sha256_file(p)
    return out


def write_manifest(out_dir: Path, command: str, argv: list[str], settings: dict, inputs, outputs, started: float) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "config": settings,
        "inputs": _input_files(inputs),
        "seed": settings.get("seed"),
        "version": __version__,
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
        "wall_time_s": round(time.time() - started, 3),
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def dump_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n", encoding="utf-8")
    return path


def _require(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"missing {what}")
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _store_for(uig, args, settings) -> EmbeddingStore:
    if getattr(args, "embeddings", None):
        return load_store(_require(args.embeddings, "embedding store"))
    dim = int(settings["embed"]["dim"])
    return embed_uig(uig, hashing_embedder(dim, int(settings["seed"])), dim, note=f"hashing:{dim}")


# ------------------------------------------------------------------ commands


def cmd_ingest(args, settings, out_dir: Path) -> tuple[list[Path], list[Path]]:
    if args.style == "pens":
        behaviors = _require(args.behaviors, "behaviors table (--behaviors)")
        news = _require(args.news, "doc table (--news)")
        docs = read_news_tsv(news)
        uig, errors = build_uig_pens(read_pens_tsv(behaviors), docs)
        for e in errors:
            log.warning("row %d: %s", e.row, e.message)
        notes = [f"row {e.row}: {e.message}" for e in errors]
        inputs = [behaviors, news]
        if args.gold:
            gold = _require(args.gold, "gold summaries")
            uig, gold_notes = inject_snodes_pens(uig, read_gold_tsv(gold))
            notes += gold_notes
            inputs.append(gold)
    else:
        ratings = _require(args.ratings, "ratings file (--ratings)")
        docs = read_docs(_require(args.docs, "doc table")) if args.docs else None
        uig = build_uig_oai(read_oai_jsonl(ratings), args.threshold, int(settings["seed"]), docs)
        notes = []
        inputs = [ratings] + ([Path(args.docs)] if args.docs else [])
    violations = validate(uig)
    paths = list(write_jsonl(uig, out_dir).values())
    report = {
        "trajectories": len(uig.trajectories),
        "docs": len(uig.docs),
        "summaries": len(uig.summaries),
        "notes": notes,
        "violations": [str(v) for v in violations],
    }
    paths.append(dump_json(report, out_dir / "validation.json"))
    if violations and not args.lenient:
        raise RuntimeError(f"{len(violations)} validation failures; see validation.json (or pass --lenient)")
    return inputs, paths


def cmd_embed(args, settings, out_dir: Path):
    src = _require(args.input, "input pool directory")
    uig = read_jsonl(src)
    store = _store_for(uig, argparse.Namespace(embeddings=None), settings)
    path = out_dir / "embeddings.bin"
    save_store(store, path)
    return [src], [path]


def cmd_augment(args, settings, out_dir: Path):
    src = _require(args.input, "input pool directory")
    uig = read_jsonl(src)
    seed, jobs = int(settings["seed"]), int(settings["jobs"])
    ds, smp = build_configs(settings, smp_on=not args.no_smp)
    store = _store_for(uig, args, settings) if smp is not None else None
    if args.preset == "paper-mix":
        mix = ten_config_mix(m=ds.m, seed=seed, seg_len_range=ds.seg_len_range, fraction=float(settings["mix"]["fraction"]))
        if args.no_smp:
            mix = MixConfig(tuple((d, None) for d, _ in mix.configs), mix.sample_fraction, mix.seed)
        out = build_mix(uig, mix, store, jobs)
    else:
        out = run_pipeline(uig, ds, smp, store, jobs, resample_outputs=not args.once)
    paths = list(write_jsonl(out, out_dir).values())
    counts: dict[str, int] = {}
    for t in out.trajectories:
        key = f"{t.provenance.kind.value}:{t.provenance.config}"
        counts[key] = counts.get(key, 0) + 1
    paths.append(dump_json({"trajectories": len(out), "provenance": counts}, out_dir / "augment_report.json"))
    return [src] + ([Path(args.embeddings)] if args.embeddings else []), paths


def cmd_diversity(args, settings, out_dir: Path):
    src = _require(args.input, "input pool directory")
    uig = read_jsonl(src)
    dv = settings["diversity"]
    try:
        cfg = DiversityConfig(float(dv["alpha"]), float(dv["epsilon"]), _metric(dv["metric"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = degreed(uig, _store_for(uig, args, settings), cfg)
    paths = [dump_json(report.to_dict(), out_dir / "diversity.json")]
    csv_path = out_dir / "diversity.csv"
    csv_path.write_text(report.summary_csv(), encoding="utf-8")
    paths.append(csv_path)
    return [src] + ([Path(args.embeddings)] if args.embeddings else []), paths


def cmd_score(args, settings, out_dir: Path):
    src = _require(args.instances, "instance file (--instances)")
    docs = read_docs(_require(args.docs, "doc table")) if args.docs else None
    instances = read_instances(src, docs)
    unigrams = args.unigrams

    def div(a, b):
        return 1.0 - rouge_su4(a, b, unigrams=unigrams).f1

    try:
        params = PersevalParams(
            alpha_exp=args.alpha_exp,
            beta_exp=args.beta_exp,
            gamma_exp=args.gamma_exp,
            divergence=div,
            weight_policy=WEIGHT_POLICIES[args.weights],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    report = perseval(instances, params)
    paths = [dump_json(report.to_dict(), out_dir / "perseval.json")]
    csv_path = out_dir / "perseval.csv"
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    paths.append(csv_path)
    if report.degenerate:
        log.warning("degenerate responsiveness (identical generated summaries) on %d documents", len(report.degenerate))
    return [src] + ([Path(args.docs)] if args.docs else []), paths


def cmd_rank(args, settings, out_dir: Path):
    src = _require(args.scores, "score table (--scores)")
    report = evaluate(read_scores(src), args.k, args.pooled_auc, args.binary)
    return [src], [dump_json(report.to_dict(), out_dir / "rank.json")]


def _load_table(path: Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_correlate(args, settings, out_dir: Path):
    dpath = _require(args.diversity, "diversity table (--diversity)")
    apath = _require(args.accuracy, "accuracy table (--accuracy)")
    try:
        rows = diversity_accuracy_correlation(_load_table(dpath), _load_table(apath))
    except ValueError as exc:
        raise UsageError(f"{dpath} / {apath}: {exc}") from exc
    out = [
        {"metric": r.metric, **{k: (None if math.isnan(v) else v) for k, v in r.values.items()}, "leave_one_out": r.loo_delta}
        for r in rows
    ]
    paths = [dump_json(out, out_dir / "correlations.json")]
    csv_path = out_dir / "correlations.csv"
    csv_path.write_text(correlation_table_csv(rows), encoding="utf-8")
    paths.append(csv_path)
    return [dpath, apath], paths


def cmd_stability(args, settings, out_dir: Path):
    """DegreeD of each input pool under a base metric and a substituted one."""
    inputs = [_require(p, "input pool directory") for p in args.inputs]
    dv = settings["diversity"]
    base = _metric(dv["metric"])
    if base.kind is not MetricKind.MANHATTAN and args.weight_range:
        raise UsageError("--weight-range substitutes a weighted Manhattan metric; base metric must be manhattan")
    F, G = [], []
    lam = Lam = args.scale
    for i, src in enumerate(inputs):
        uig = read_jsonl(src)
        store = _store_for(uig, argparse.Namespace(embeddings=None), settings)
        f_cfg = DiversityConfig(float(dv["alpha"]), float(dv["epsilon"]), base)
        if args.weight_range:
            lo, hi = args.weight_range
            rng = np.random.default_rng(np.random.SeedSequence([int(settings["seed"]), 7919]))
            w = rng.uniform(lo, hi, size=store.dim)
            g_metric = weighted_manhattan(w)
            lam, Lam = lo, hi
        else:
            g_metric = DistanceMetric(base.kind, base.weights, base.scale * args.scale)
        g_cfg = DiversityConfig(float(dv["alpha"]), float(dv["epsilon"]), g_metric)
        F.append(degreed(uig, store, f_cfg).degreed)
        G.append(degreed(uig, store, g_cfg).degreed)
    si = StabilityInput(tuple(F), tuple(G), lam, Lam)
    verdicts = squeeze_check(si)
    report: dict[str, Any] = {
        "datasets": [str(p) for p in inputs],
        "F": F,
        "G": G,
        "lambda": lam,
        "Lambda": Lam,
        "band": list(ambiguity_band(lam, Lam)),
        "kappa0": kappa0(lam, Lam),
        "squeeze": [asdict(v) for v in verdicts],
        "squeeze_pass": all(v.ok for v in verdicts),
    }
    if len(F) >= 2:
        if len(set(F)) == len(F):
            rs = rank_stability(si)
            report["rank"] = {
                "guaranteed": rs.guaranteed,
                "in_band_pairs": [list(p) for p in rs.in_band_pairs],
                "inversions": [list(p) for p in rs.inversions],
                "d_squared": list(rs.d_squared),
                "spearman": rs.spearman,
                "kendall": rs.kendall,
                "identical_ranking": not rs.inversions,
            }
        if args.accuracy:
            acc_table = _load_table(_require(args.accuracy, "accuracy table"))
            missing = [Path(p).name for p in inputs if Path(p).name not in acc_table]
            if missing:
                raise UsageError(f"{args.accuracy}: no accuracy for {', '.join(missing)}")
            A = [float(acc_table[Path(p).name]) for p in inputs]
            report["correlations"] = {
                name: {"F": fn(F, A), "G": fn(G, A)} for name, fn in CORRELATIONS.items()
            }
            report["pearson_FG"] = pearson(F, G)
    return inputs, [dump_json(report, out_dir / "stability.json")]


def cmd_report(args, settings, out_dir: Path):
    """Collect every manifest under the given directories into one markdown index."""
    roots = [_require(p, "run directory") for p in args.runs]
    lines = ["# Runs", ""]
    for root in roots:
        for mf in sorted(Path(root).rglob("manifest.json")):
            m = json.loads(mf.read_text(encoding="utf-8"))
            lines.append(f"## {mf.parent}")
            lines.append(f"- command: `{m['command']}` (seed {m['seed']}, version {m['version']})")
            lines.append(f"- outputs: {', '.join(m['outputs'])}")
            for name in ("diversity.json", "perseval.json", "rank.json"):
                p = mf.parent / name
                if p.exists():
                    data = json.loads(p.read_text(encoding="utf-8"))
                    keys = {k: v for k, v in data.items() if isinstance(v, (int, float))}
                    lines.append(f"- {name}: " + ", ".join(f"{k}={v}" for k, v in sorted(keys.items())))
            lines.append("")
    path = out_dir / "report.md"
    path.write_text("\n".join(lines), encoding="utf-8")
    return roots, [path]


COMMANDS: dict[str, Callable] = {
    "ingest": cmd_ingest,
    "embed": cmd_embed,
    "augment": cmd_augment,
    "diversity": cmd_diversity,
    "score": cmd_score,
    "rank": cmd_rank,
    "correlate": cmd_correlate,
    "stability": cmd_stability,
    "report": cmd_report,
}


# -------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default)
    common.add_argument("--jobs", type=int, default=default)
    common.add_argument("--config", default=default, help="JSON or TOML settings file")
    common.add_argument("--out-dir", default=default)
    common.add_argument("-v", "--verbose", action="store_true", default=False if default is None else default)
    return common


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uigaug", description=__doc__, parents=[_common(None)])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    # after the command, shared flags only override what was given before it
    after = _common(argparse.SUPPRESS)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[after])

    ing = add("ingest", "build a canonical pool from raw logs")
    ing.add_argument("--style", "--dataset-style", dest="style", choices=["pens", "oai"], default="pens")
    ing.add_argument("--behaviors")
    ing.add_argument("--news")
    ing.add_argument("--gold")
    ing.add_argument("--ratings")
    ing.add_argument("--docs")
    ing.add_argument("--threshold", type=int, default=6)
    ing.add_argument("--lenient", action="store_true")

    emb = add("embed", "write a hashing-embedder store for a pool")
    emb.add_argument("--input", required=True)
    emb.add_argument("--embed-dim", dest="embed.dim", type=int)

    aug = add("augment", "double shuffling and perturbation")
    aug.add_argument("--input", required=True)
    aug.add_argument("--embeddings")
    aug.add_argument("--embed-dim", dest="embed.dim", type=int)
    aug.add_argument("--preset", choices=["paper-mix"])
    aug.add_argument("--ds.m", dest="ds.m", type=int)
    aug.add_argument("--ds.gap", dest="ds.gap", type=int)
    aug.add_argument("--ds.len", dest="ds.target_len", type=int)
    aug.add_argument("--ds.seg-min", dest="ds.seg_min", type=int)
    aug.add_argument("--ds.seg-max", dest="ds.seg_max", type=int)
    aug.add_argument("--strict", dest="ds.strict", action="store_const", const=True)
    aug.add_argument("--smp.k", dest="smp.k", type=int)
    aug.add_argument("--smp.lambda", dest="smp.lambda", type=float)
    aug.add_argument("--smp.p", dest="smp.p", type=float)
    aug.add_argument("--smp.top-p", dest="smp.top_p", type=int)
    aug.add_argument("--smp.metric", dest="smp.metric")
    aug.add_argument("--smp.all-snodes", dest="smp.all_snodes", action="store_const", const=True)
    aug.add_argument("--mix.fraction", dest="mix.fraction", type=float)
    aug.add_argument("--no-smp", action="store_true")
    aug.add_argument("--once", action="store_true", help="transform each trajectory at most once")

    div = add("diversity", "TP, RTC and DegreeD of a pool")
    div.add_argument("--input", required=True)
    div.add_argument("--embeddings")
    div.add_argument("--embed-dim", dest="embed.dim", type=int)
    div.add_argument("--alpha", dest="diversity.alpha", type=float)
    div.add_argument("--epsilon", dest="diversity.epsilon", type=float)
    div.add_argument("--metric", dest="diversity.metric")

    sc = add("score", "ROUGE-SU4 based responsiveness and PerSEval")
    sc.add_argument("--instances", required=True)
    sc.add_argument("--docs")
    sc.add_argument("--alpha-exp", type=float, default=3.0)
    sc.add_argument("--beta-exp", type=float, default=1.0)
    sc.add_argument("--gamma-exp", type=float, default=4.0)
    sc.add_argument("--weights", choices=sorted(WEIGHT_POLICIES), default="softmax")
    sc.add_argument("--unigrams", action="store_true")

    rk = add("rank", "AUC, MRR and nDCG@k from a score table")
    rk.add_argument("--scores", required=True)
    rk.add_argument("--k", type=int, nargs="+", default=[5, 10])
    rk.add_argument("--pooled-auc", action="store_true")
    rk.add_argument("--binary", action="store_true")

    co = add("correlate", "diversity vs accuracy correlation table")
    co.add_argument("--diversity", required=True, help="JSON {metric: {dataset: value}}")
    co.add_argument("--accuracy", required=True, help="JSON {dataset: value}")

    st = add("stability", "DegreeD under a substituted metric")
    st.add_argument("--inputs", nargs="+", required=True)
    st.add_argument("--embed-dim", dest="embed.dim", type=int)
    st.add_argument("--metric", dest="diversity.metric")
    st.add_argument("--scale", type=float, default=1.0)
    st.add_argument("--weight-range", type=float, nargs=2, metavar=("LO", "HI"))
    st.add_argument("--accuracy", help="JSON {pool directory name: accuracy}")

    rp = add("report", "index of runs")
    rp.add_argument("--runs", nargs="+", required=True)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"uigaug: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    started = time.time()
    try:
        settings = resolve_settings(args)
        if args.command == "stability" and args.scale <= 0:
            raise UsageError("--scale must be positive")
        out_dir = Path(args.out_dir or settings.get("out_dir") or f"out/{args.command}")
        out_dir.mkdir(parents=True, exist_ok=True)
        inputs, outputs = COMMANDS[args.command](args, settings, out_dir)
        write_manifest(out_dir, args.command, argv, settings, inputs, outputs, started)
    except UsageError as exc:
        print(f"uigaug: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure of a stage
        log.debug("stage failed", exc_info=True)
        print(f"uigaug: {args.command} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
