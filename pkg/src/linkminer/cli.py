"""Command-line front end: ingest, mine, rank, eval, analyze, synth.

Every output embeds a metadata record (tool version, config hash, input
checksums) and contains no wall-clock state, so identical config + seed
gives byte-identical files.  Failures exit nonzero with a single
machine-parsable ``ERROR <code>: ...`` line on stderr.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import click

from . import __version__
from .corpus import (LinkGraph, MentionIndex, TextIndex, build_anchor_dictionary,
                     build_link_graph, file_checksum)
from .errors import (GroundTruthError, InfeasibleConfigError, LinkMinerError,
                     TraceFormatError)
from .evaluation import (aggregate_report, bucket_analysis, corpus_path_stats,
                         false_negative_histogram, final_click_curve,
                         precision_at_k, volume_precision_curve)
from .groundtruth import (DEFAULT_ALPHA, LabelConfig, LinkHistory, label_candidate,
                          link_rate, load_human_labels, strict_label_candidate)
from .miner import (CandidateSet, baseline_all_mentions, mine_target,
                    read_candidates_csv, write_candidates_csv)
from .ranking import (RankedEntry, RankedSuggestions, build_svd_model,
                      load_svd_model, rank_candidates, save_svd_model)
from .synth import SynthConfig, generate_world, simulate_paths
from .traces import (TargetIndex, dataset_stats, normalize_paths, parse_generic,
                     parse_wikispeedia)

log = logging.getLogger(__name__)

EXIT_CODES = {
    "missing-file": 2,
    "parse-failure": 3,
    "infeasible-config": 4,
    "ineligible-evaluation": 5,
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved parameters of one subcommand run, echoed into every output."""

    subcommand: str
    params: dict

    def canonical(self) -> str:
        return json.dumps({"subcommand": self.subcommand, **self.params},
                          sort_keys=True, default=str)

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` file; values are JSON literals when they parse,
    strings otherwise.  Flags override file values."""
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InfeasibleConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            values[key] = json.loads(value)
        except json.JSONDecodeError:
            values[key] = value
    return values


def _resolve(defaults: dict, config_file: str | None, flags: dict) -> dict:
    merged = dict(defaults)
    if config_file:
        file_values = load_config_file(config_file)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise InfeasibleConfigError(
                f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(file_values)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _require_files(params: dict, keys: tuple[str, ...]) -> None:
    for key in keys:
        value = params.get(key)
        if value is None:
            raise InfeasibleConfigError(f"--{key.replace('_', '-')} is required")
        if not Path(value).exists():
            raise FileNotFoundError(value)


def _metadata(run: RunConfig, inputs: dict[str, str]) -> dict:
    return {
        "tool_version": __version__,
        "config": dict(sorted(run.params.items(), key=lambda kv: kv[0])),
        "config_sha256": run.sha256(),
        "input_sha256": {name: file_checksum(path) for name, path in sorted(inputs.items())},
    }


def _metadata_lines(meta: dict) -> list[str]:
    lines = [f"tool_version={meta['tool_version']}",
             f"config_sha256={meta['config_sha256']}"]
    lines += [f"config:{k}={v}" for k, v in meta["config"].items()]
    lines += [f"input_sha256:{k}={v}" for k, v in meta["input_sha256"].items()]
    return lines


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_csv(path: Path, meta: dict, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in _metadata_lines(meta):
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_corpus(params: dict) -> tuple[LinkGraph, MentionIndex]:
    graph = build_link_graph(params["links"], params["titles"],
                             params["snapshot_time"])
    texts = TextIndex.from_dir(params["texts"], graph)
    dictionary = build_anchor_dictionary(params["anchors"], texts, graph)
    return graph, MentionIndex(graph, dictionary, texts)


def _load_paths(params: dict, graph: LinkGraph) -> tuple[TargetIndex, dict]:
    if params["trace_format"] == "generic":
        result = parse_generic(params["paths"])
    else:
        result = parse_wikispeedia(params["paths"], finished=True)
    records = list(result.records)
    n_skipped = result.n_skipped
    if params.get("unfinished_paths"):
        result = parse_wikispeedia(params["unfinished_paths"], finished=False)
        records += result.records
        n_skipped += result.n_skipped
    paths, reasons = normalize_paths(
        records, graph,
        keep_detours=params["keep_detours"],
        include_unfinished=params["include_unfinished"])
    index = TargetIndex(paths)
    diag = {"n_records": len(records), "n_paths": len(paths),
            "n_skipped_lines": n_skipped, "rejections": dict(sorted(reasons.items()))}
    return index, diag


def _mined_targets(index: TargetIndex, floor: int) -> list[int]:
    return [t for t in index.targets() if index.n_paths(t) >= floor]


def _mine_all(params: dict, graph: LinkGraph, mention: MentionIndex,
              index: TargetIndex) -> list[CandidateSet]:
    targets = _mined_targets(index, params["min_paths_per_target"])
    if params["selection"] == "path":
        def one(t: int) -> CandidateSet:
            return mine_target(t, index, graph, mention,
                               position_threshold=params["position_threshold"],
                               min_support=params["min_support"])
    else:
        def one(t: int) -> CandidateSet:
            return baseline_all_mentions(t, graph, mention, index=index)
    with ThreadPoolExecutor(max_workers=params["threads"]) as pool:
        return list(pool.map(one, targets))


def _corpus_inputs(params: dict) -> dict[str, str]:
    return {"links": params["links"], "titles": params["titles"],
            "anchors": params["anchors"]}


_CORPUS_DEFAULTS = {
    "links": None, "titles": None, "anchors": None, "texts": None,
    "snapshot_time": 0,
}
_TRACE_DEFAULTS = {
    "paths": None, "unfinished_paths": None, "trace_format": "wikispeedia",
    "keep_detours": False, "include_unfinished": False,
}
_MINE_DEFAULTS = {
    "selection": "path", "position_threshold": 0.5, "min_support": 1,
    "min_paths_per_target": 100, "threads": 1,
}


def corpus_options(fn):
    fn = click.option("--links", type=click.Path(), help="snapshot links TSV")(fn)
    fn = click.option("--titles", type=click.Path(), help="titles file, one per line")(fn)
    fn = click.option("--anchors", type=click.Path(), help="anchor occurrences TSV")(fn)
    fn = click.option("--texts", type=click.Path(), help="directory of article texts")(fn)
    fn = click.option("--snapshot-time", type=int, default=None,
                      help="reference snapshot timestamp (seconds)")(fn)
    return fn


def trace_options(fn):
    fn = click.option("--paths", type=click.Path(), help="finished paths file")(fn)
    fn = click.option("--unfinished-paths", type=click.Path(),
                      help="unfinished paths file (optional)")(fn)
    fn = click.option("--trace-format", type=click.Choice(["wikispeedia", "generic"]),
                      default=None)(fn)
    fn = click.option("--keep-detours/--no-keep-detours", default=None,
                      help="keep pages the player backed out of")(fn)
    fn = click.option("--include-unfinished/--no-include-unfinished", default=None,
                      help="admit unfinished paths with their declared target")(fn)
    return fn


def common_options(fn):
    fn = click.option("--config", "config_file", type=click.Path(exists=True),
                      help="flat key = value config file; flags override it")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="output directory")(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main():
    """Mine, rank, and evaluate missing-hyperlink suggestions from
    navigation traces."""
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")


def _run(subcommand, defaults, config_file, flags, body):
    try:
        params = _resolve(defaults, config_file, flags)
        run = RunConfig(subcommand, params)
        out = Path(params.get("out") or ".")
        out.mkdir(parents=True, exist_ok=True)
        body(params, run, out)
    except FileNotFoundError as exc:
        click.echo(f"ERROR missing-file: {exc}", err=True)
        sys.exit(EXIT_CODES["missing-file"])
    except LinkMinerError as exc:
        click.echo(f"ERROR {exc.code}: {exc}", err=True)
        sys.exit(EXIT_CODES.get(exc.code, 1))


@main.command()
@common_options
@corpus_options
@trace_options
def ingest(config_file, out, **flags):
    """Parse traces, build the per-target index, and report dataset statistics."""
    defaults = {**_CORPUS_DEFAULTS, **_TRACE_DEFAULTS, "out": "."}
    flags["out"] = out

    def body(params, run, out_dir):
        _require_files(params, ("links", "titles", "paths"))
        graph = build_link_graph(params["links"], params["titles"],
                                 params["snapshot_time"])
        index, diag = _load_paths(params, graph)
        stats = dataset_stats(index)
        index.save(out_dir / "normalized_paths.tsv", graph)
        inputs = {"links": params["links"], "titles": params["titles"],
                  "paths": params["paths"]}
        if params.get("unfinished_paths"):
            inputs["unfinished_paths"] = params["unfinished_paths"]
        _write_json(out_dir / "ingest_stats.json", {
            "metadata": _metadata(run, inputs),
            "corpus": {"n_articles": graph.n_articles, "n_links": graph.n_edges},
            "traces": diag,
            "stats": {
                "n_paths": stats.n_paths,
                "n_missions": stats.n_missions,
                "n_targets": stats.n_targets,
                "mean_paths_per_target": stats.mean_paths_per_target,
                "median_paths_per_target": stats.median_paths_per_target,
                "n_targets_min_100": stats.n_targets_min_100,
                "n_targets_min_500": stats.n_targets_min_500,
            },
        })
        click.echo(f"{stats.n_paths} paths, {stats.n_targets} targets "
                   f"-> {out_dir / 'ingest_stats.json'}")

    _run("ingest", defaults, config_file, flags, body)


@main.command()
@common_options
@corpus_options
@trace_options
@click.option("--selection", type=click.Choice(["path", "none"]), default=None)
@click.option("--position-threshold", type=float, default=None,
              help="discard sources at or below this mean relative position")
@click.option("--min-support", type=int, default=None)
@click.option("--min-paths-per-target", type=int, default=None)
@click.option("--threads", type=int, default=None)
def mine(config_file, out, **flags):
    """Mine source candidates per target into candidates.csv."""
    defaults = {**_CORPUS_DEFAULTS, **_TRACE_DEFAULTS, **_MINE_DEFAULTS, "out": "."}
    flags["out"] = out

    def body(params, run, out_dir):
        _require_files(params, ("links", "titles", "anchors", "texts", "paths"))
        graph, mention = _load_corpus(params)
        index, _ = _load_paths(params, graph)
        sets = _mine_all(params, graph, mention, index)
        meta = _metadata(run, {**_corpus_inputs(params), "paths": params["paths"]})
        write_candidates_csv(sets, graph, out_dir / "candidates.csv",
                             metadata=_metadata_lines(meta))
        n = sum(len(s) for s in sets)
        click.echo(f"{n} candidates across {len(sets)} targets "
                   f"-> {out_dir / 'candidates.csv'}")

    _run("mine", defaults, config_file, flags, body)


@main.command()
@common_options
@corpus_options
@click.option("--candidates", type=click.Path(), help="candidates.csv from `mine`")
@click.option("--ranker", type=click.Choice(["mw", "svd", "freq"]), default=None)
@click.option("--rank-k", type=int, default=None,
              help="SVD rank (256 for small corpora, 1000 for large)")
@click.option("--svd-seed", type=int, default=None)
@click.option("--svd-tolerance", type=float, default=None)
@click.option("--svd-model", type=click.Path(), default=None,
              help="model file: loaded if present, else built and saved here")
def rank(config_file, out, **flags):
    """Rank mined candidates into rankings.csv."""
    defaults = {**_CORPUS_DEFAULTS, "candidates": None, "ranker": "mw",
                "rank_k": 256, "svd_seed": 0, "svd_tolerance": 1e-9,
                "svd_model": None, "out": "."}
    flags["out"] = out

    def body(params, run, out_dir):
        _require_files(params, ("links", "titles", "candidates"))
        graph = build_link_graph(params["links"], params["titles"],
                                 params["snapshot_time"])
        sets = read_candidates_csv(params["candidates"], graph)
        model = None
        if params["ranker"] == "svd":
            model_path = params.get("svd_model") or str(out_dir / "svd_model.npz")
            if Path(model_path).exists():
                model = load_svd_model(model_path, graph)
            else:
                model = build_svd_model(graph, params["rank_k"],
                                        seed=params["svd_seed"],
                                        tolerance=params["svd_tolerance"])
                save_svd_model(model, model_path)
        rankings = [rank_candidates(s, params["ranker"], graph=graph, model=model)
                    for s in sets]
        meta = _metadata(run, {"links": params["links"], "titles": params["titles"],
                               "candidates": params["candidates"]})
        rows = []
        for ranked in rankings:
            for position, entry in enumerate(ranked.entries, start=1):
                rows.append([graph.title_of(ranked.target), position,
                             graph.title_of(entry.candidate.source),
                             repr(entry.score), ranked.method])
        _write_csv(out_dir / "rankings.csv", meta,
                   ["target", "rank", "source", "score", "method"], rows)
        click.echo(f"{len(rows)} ranked suggestions -> {out_dir / 'rankings.csv'}")

    _run("rank", defaults, config_file, flags, body)


def _read_rankings_csv(path: str | Path, graph: LinkGraph,
                       sets: list[CandidateSet]) -> list[RankedSuggestions]:
    by_pair = {(c.target, c.source): c for s in sets for c in s.candidates}
    rows_by_target: dict[int, list[tuple[int, RankedEntry]]] = {}
    method = "mw"
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        target = graph.id_of(row["target"])
        source = graph.id_of(row["source"])
        method = row["method"]
        candidate = by_pair.get((target, source))
        if candidate is None:
            raise TraceFormatError(
                f"ranking row ({row['target']}, {row['source']}) missing from candidates")
        rows_by_target.setdefault(target, []).append(
            (int(row["rank"]), RankedEntry(candidate, float(row["score"]))))
    rankings = []
    for target in sorted(rows_by_target):
        entries = [e for _, e in sorted(rows_by_target[target], key=lambda x: x[0])]
        rankings.append(RankedSuggestions(target, method, tuple(entries)))
    return rankings


@main.command(name="eval")
@common_options
@corpus_options
@click.option("--candidates", type=click.Path())
@click.option("--rankings", type=click.Path())
@click.option("--history", type=click.Path(), help="link presence intervals")
@click.option("--creation", type=click.Path(), help="article creation times")
@click.option("--alpha", type=float, default=None, help="link-rate threshold")
@click.option("--max-k", type=int, default=None, help="precision@k depth K")
@click.option("--mode", type=click.Choice(["standard", "strict"]), default=None)
@click.option("--static-snapshot-time", type=int, default=None)
@click.option("--strict-alpha", type=float, default=None,
              help="threshold over the post-snapshot window (defaults to --alpha)")
@click.option("--human-labels", type=click.Path(), default=None)
@click.option("--threads", type=int, default=None)
def eval_cmd(config_file, out, **flags):
    """Evaluate rankings against link-edit-history ground truth."""
    defaults = {**_CORPUS_DEFAULTS, "candidates": None, "rankings": None,
                "history": None, "creation": None, "alpha": DEFAULT_ALPHA,
                "max_k": 5, "mode": "standard", "static_snapshot_time": None,
                "strict_alpha": None, "human_labels": None, "threads": 1, "out": "."}
    flags["out"] = out

    def body(params, run, out_dir):
        _require_files(params, ("links", "titles", "candidates", "rankings",
                                "history", "creation"))
        graph = build_link_graph(params["links"], params["titles"],
                                 params["snapshot_time"])
        sets = read_candidates_csv(params["candidates"], graph)
        rankings = _read_rankings_csv(params["rankings"], graph, sets)
        history = LinkHistory.load(params["history"], params["creation"])
        reference_time = params["snapshot_time"] or graph.snapshot_time
        if params["mode"] == "strict":
            config = LabelConfig(reference_time=reference_time,
                                 alpha=params["strict_alpha"] or params["alpha"],
                                 mode="strict",
                                 static_snapshot_time=params["static_snapshot_time"])

            def label(s: int, t: int) -> bool:
                return strict_label_candidate(graph.title_of(s), graph.title_of(t),
                                              history, config)
        else:
            config = LabelConfig(reference_time=reference_time, alpha=params["alpha"])

            def label(s: int, t: int) -> bool:
                return label_candidate(graph.title_of(s), graph.title_of(t),
                                       history, config)

        k_max = params["max_k"]
        with ThreadPoolExecutor(max_workers=params["threads"]) as pool:
            labeled = dict(zip(
                [r.target for r in rankings],
                pool.map(lambda r: precision_at_k(r, label, k_max), rankings)))
        meta = _metadata(run, {"links": params["links"], "titles": params["titles"],
                               "candidates": params["candidates"],
                               "rankings": params["rankings"],
                               "history": params["history"],
                               "creation": params["creation"]})
        report = aggregate_report(labeled, k_max, metadata=meta)
        _write_json(out_dir / "report.json", report.as_dict())
        _write_csv(out_dir / "precision_curve.csv", meta, ["k", "mean_precision"],
                   [[k + 1, repr(v)] for k, v in enumerate(report.mean_curve)])
        volume = volume_precision_curve(rankings, label, graph=graph)
        _write_csv(out_dir / "volume_precision.csv", meta, ["n_suggestions", "precision"],
                   [[n, repr(p)] for n, p in volume])
        if all(s.has_path_stats for s in sets):
            final = final_click_curve(rankings, k_max)
            _write_csv(out_dir / "final_click.csv", meta, ["k", "final_click_fraction"],
                       [[k + 1, repr(v)] for k, v in enumerate(final)])
        if params.get("human_labels"):
            human = load_human_labels(params["human_labels"])
            human_ids = {}
            for (s_title, t_title), lab in human.items():
                try:
                    human_ids[(graph.id_of(s_title), graph.id_of(t_title))] = lab
                except LinkMinerError:
                    continue
            auto = {(c.source, c.target): label(c.source, c.target)
                    for s in sets for c in s.candidates
                    if (c.source, c.target) in human_ids}
            counts, edges = false_negative_histogram(
                {(s, t): auto[(s, t)] for (s, t) in auto},
                human_ids, bins=10)
            _write_csv(out_dir / "false_negative_histogram.csv", meta,
                       ["bin_lo", "bin_hi", "count"],
                       [[repr(edges[i]), repr(edges[i + 1]), c]
                        for i, c in enumerate(counts)])
        click.echo(f"AUC={report.auc:.4f} over {len(report.eligible_targets)} targets "
                   f"-> {out_dir / 'report.json'}")

    _run("eval", defaults, config_file, flags, body)


@main.command()
@common_options
@corpus_options
@trace_options
@click.option("--history", type=click.Path())
@click.option("--creation", type=click.Path())
@click.option("--alphas", type=str, default=None,
              help="comma-separated link-rate thresholds for the bucket table")
def analyze(config_file, out, **flags):
    """Path-position bucket table and per-path mention statistics."""
    defaults = {**_CORPUS_DEFAULTS, **_TRACE_DEFAULTS, "history": None,
                "creation": None, "alphas": "0.1,0.3,0.5", "out": "."}
    flags["out"] = out

    def body(params, run, out_dir):
        _require_files(params, ("links", "titles", "anchors", "texts", "paths",
                                "history", "creation"))
        graph, mention = _load_corpus(params)
        index, _ = _load_paths(params, graph)
        history = LinkHistory.load(params["history"], params["creation"])
        reference_time = params["snapshot_time"] or graph.snapshot_time
        alphas = tuple(float(a) for a in str(params["alphas"]).split(","))

        def rate(s: int, t: int) -> float:
            try:
                return link_rate(graph.title_of(s), graph.title_of(t), history,
                                 reference_time)
            except GroundTruthError:
                return 0.0

        paths = [p for t in index.targets() for p in index.paths_for(t)]
        buckets = bucket_analysis(paths, mention, graph, rate, alphas)
        stats = corpus_path_stats(paths, mention, graph)
        meta = _metadata(run, {**_corpus_inputs(params), "paths": params["paths"],
                               "history": params["history"],
                               "creation": params["creation"]})
        rows = []
        for b in buckets:
            row = [repr(b.lo), repr(b.hi), b.n_pages, repr(b.mention_fraction),
                   repr(b.candidate_fraction)]
            row += [repr(b.positive_fraction(a)) for a in alphas]
            rows.append(row)
        header = ["bucket_lo", "bucket_hi", "n_pages", "mention_fraction",
                  "nonlinking_mention_fraction"]
        header += [f"positive_fraction_alpha_{a}" for a in alphas]
        _write_csv(out_dir / "position_buckets.csv", meta, header, rows)
        _write_json(out_dir / "path_stats.json", {
            "metadata": meta,
            "n_paths": stats.n_paths,
            "mean_mentioning_pages_per_path": stats.mean_mentioning_pages_per_path,
            "linking_fraction": stats.linking_fraction,
            "non_linking_fraction": stats.non_linking_fraction,
        })
        click.echo(f"bucket table -> {out_dir / 'position_buckets.csv'}")

    _run("analyze", defaults, config_file, flags, body)


@main.command()
@common_options
@click.option("--seed", type=int, default=None)
@click.option("--n-articles", type=int, default=None)
@click.option("--latent-dim", type=int, default=None)
@click.option("--link-density", type=float, default=None)
@click.option("--removal-fraction", type=float, default=None)
@click.option("--greediness-noise", type=float, default=None)
@click.option("--n-paths", type=int, default=None)
@click.option("--max-path-length", type=int, default=None)
def synth(config_file, out, **flags):
    """Generate a synthetic world with planted missing links plus traces."""
    defaults = {"seed": 0, "n_articles": 300, "latent_dim": 8, "link_density": 0.02,
                "removal_fraction": 0.05, "greediness_noise": 0.1, "n_paths": 5000,
                "max_path_length": 20, "out": "."}
    flags["out"] = out

    def body(params, run, out_dir):
        config = SynthConfig(
            seed=params["seed"], n_articles=params["n_articles"],
            latent_dim=params["latent_dim"], link_density=params["link_density"],
            removal_fraction=params["removal_fraction"],
            greediness_noise=params["greediness_noise"], n_paths=params["n_paths"],
            max_path_length=params["max_path_length"])
        world = generate_world(config, out_dir)
        sim = simulate_paths(world)
        _write_json(out_dir / "world_manifest.json", {
            "metadata": {"tool_version": __version__,
                         "config": dict(sorted(run.params.items())),
                         "config_sha256": run.sha256(),
                         "input_sha256": {}},
            "snapshot_time": world.snapshot_time,
            "n_articles": config.n_articles,
            "n_planted": len(world.planted.links),
            "n_finished_paths": sim.n_finished,
            "n_unfinished_paths": sim.n_unfinished,
            "n_skipped_paths": sim.n_skipped,
        })
        click.echo(f"world with {len(world.planted.links)} planted links, "
                   f"{sim.n_finished} finished paths -> {out_dir}")

    _run("synth", defaults, config_file, flags, body)


if __name__ == "__main__":
    main()
