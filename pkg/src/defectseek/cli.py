"""Command-line interface.

One executable, six subcommands: ingest, retrieve, score, eval, synth,
bench. Every subcommand accepts --config FILE plus one flag per config
key (flag beats file beats default). Documented JSON results go to
stdout, diagnostics to stderr. Exit codes: 0 success, 2 input or format
error, 3 shape or config error, 4 numerical failure.

Retrieval, scoring and synthesis are deterministic given inputs, config
and seed. Bench timing samples are wall-clock measurements and are
documented as approximate; everything else in its report is fixed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .benchrun import STAGES, BenchSpec, bench
from .config import CONFIG_KEYS, RunConfig
from .errors import (
    ArgumentError,
    DimensionError,
    EngineError,
    EXIT_INPUT,
    EXIT_OK,
    ManifestError,
    exit_code_for,
)
from .formats import EmbeddingMatrix, load_embeddings
from .knowledge import (
    PromptTemplates,
    build_index,
    instantiate_prompts,
    load_centroids,
    load_index,
    parse_manifest,
    save_index,
)
from .localization import PatchGrid, image_score, localization_map
from .metrics import auroc, pixel_auroc_macro
from .pgm import read_pgm, write_pgm
from .retrieval import RetrievalResult, kde_sample_retrieve, score_all, top_k
from .sparse_code import hierarchical_apply
from .synthetic import DefectPlan, KbPlan, gen_defect_grid, gen_planted_kb, load_plan
from .synthetic import write_defect_fixture, write_kb_fixture

__all__ = ["main", "build_parser"]


def _config_epilog() -> str:
    lines = ["config keys (file format: 'key = value', one per line):"]
    for key, (typ, default, _, bounds) in CONFIG_KEYS.items():
        lines.append(f"  {key} ({typ.__name__}, {bounds}, default {default!r})")
    return "\n".join(lines)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    group = common.add_argument_group("configuration")
    group.add_argument("--config", metavar="FILE", help="flat key = value config file")
    for key, (typ, default, _, bounds) in CONFIG_KEYS.items():
        group.add_argument(
            f"--{key.replace('_', '-')}",
            dest=key,
            type=typ,
            default=None,
            metavar=typ.__name__.upper(),
            help=f"{bounds}, default {default!r}",
        )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="defectseek",
        description="Embedding-level retrieval and anomaly scoring engine.",
        epilog=_config_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = _common_parser()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "ingest", parents=[common], help="build an index bundle from manifest + embeddings"
    )
    p.add_argument("--manifest", required=True, help="JSON-lines document manifest")
    p.add_argument("--embeddings", required=True, help="lock embedding file")
    p.add_argument("--out", required=True, help="output bundle directory")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser(
        "retrieve", parents=[common], help="rank knowledge documents for a key vector"
    )
    p.add_argument("--index", required=True, help="index bundle directory")
    p.add_argument("--key", required=True, help="embedding file holding one key vector")
    p.add_argument("--method", choices=["topk", "kde"], default="kde")
    p.add_argument("--query-id", default=None, help="defaults to the key file stem")
    p.set_defaults(handler=cmd_retrieve)

    p = sub.add_parser(
        "score", parents=[common], help="localize anomalies on a patch grid"
    )
    p.add_argument("--patches", required=True, help="patch-grid embedding file")
    p.add_argument("--grid-h", type=int, default=None)
    p.add_argument("--grid-w", type=int, default=None)
    p.add_argument("--normal-prompt", default=None, help="flawless prompt vector file")
    p.add_argument("--defect-prompt", default=None, help="defect prompt vector file")
    p.add_argument("--label", default=None, help="defect label routed through templates")
    p.add_argument("--category", default="object", help="object category for templates")
    p.add_argument(
        "--prompt-table",
        default=None,
        help="prompt embedding file with a .labels.json sidecar of prompt texts",
    )
    p.add_argument("--out", required=True, help="output prefix, writes PREFIX.pgm")
    p.add_argument("--out-h", type=int, default=None, help="map height, default 4x grid")
    p.add_argument("--out-w", type=int, default=None, help="map width, default 4x grid")
    p.add_argument(
        "--hsp-dict",
        action="append",
        default=None,
        metavar="FILE",
        help="sparse-filter dictionary, repeat for per-stage dictionaries",
    )
    p.add_argument(
        "--diagnostics",
        action="store_true",
        help="include per-stage sparse-filter traces in the JSON output",
    )
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser(
        "eval", parents=[common], help="AUROC over score lists and map/mask pairs"
    )
    p.add_argument("--scores", default=None, help="JSONL with {score, label} per line")
    p.add_argument("--map", action="append", default=None, help="localization map PGM")
    p.add_argument("--mask", action="append", default=None, help="ground-truth mask PGM")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser(
        "synth", parents=[common], help="generate planted fixtures from a plan file"
    )
    p.add_argument("--spec", required=True, help="JSON plan, kind 'kb' or 'defect'")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser(
        "bench", parents=[common], help="time one pipeline stage, report mean and SD"
    )
    p.add_argument("--stage", required=True, choices=sorted(STAGES))
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--n", type=int, default=500, help="problem size")
    p.add_argument("--dim", type=int, default=64, help="embedding dimensionality")
    p.set_defaults(handler=cmd_bench)

    return parser


# ---------------------------------------------------------------------------
# Handlers. Each returns the JSON-serializable stdout payload.


def cmd_ingest(args: argparse.Namespace, config: RunConfig) -> dict:
    docs = parse_manifest(args.manifest)
    embeddings = load_embeddings(args.embeddings)
    index = build_index(docs, embeddings)
    save_index(index, args.out)
    return {"documents": len(index), "dim": index.dim, "out": str(args.out)}


def _retrieval_payload(result: RetrievalResult, query_id: str) -> dict:
    results = [
        {"doc_id": e.doc_id, "score": e.score, "cluster": e.cluster}
        for e in result.entries
    ]
    clustering = None
    if result.clustering is not None:
        clustering = {
            "K": result.clustering.k,
            "means": [c.mean for c in result.clustering.components],
            "variances": [c.variance for c in result.clustering.components],
            "weights": [c.weight for c in result.clustering.components],
        }
        if result.density is not None:
            clustering["density_weights"] = [
                float(w) for w in result.density.cluster_weights
            ]
        if result.allocations is not None:
            clustering["allocations"] = list(result.allocations)
    return {
        "query_id": query_id,
        "method": result.method,
        "budget": result.budget,
        "results": results,
        "clustering": clustering,
    }


def _load_single_vector(path: str, what: str) -> np.ndarray:
    matrix = load_embeddings(path)
    if matrix.count != 1:
        raise DimensionError(
            f"{what} file must hold exactly one vector, {path} has {matrix.count}"
        )
    return matrix.rows64()[0]


def cmd_retrieve(args: argparse.Namespace, config: RunConfig) -> dict:
    index = load_index(args.index)
    key = _load_single_vector(args.key, "key")
    query_id = args.query_id if args.query_id is not None else Path(args.key).stem
    if args.method == "topk":
        result = top_k(score_all(key, index), index, config.budget)
    else:
        result = kde_sample_retrieve(
            key,
            index,
            config.budget,
            seed=config.seed,
            k_max=config.k_max,
            bandwidth_floor=config.bandwidth_floor,
        )
    return _retrieval_payload(result, query_id)


def _resolve_grid(args: argparse.Namespace, count: int) -> tuple[int, int]:
    grid_h, grid_w = args.grid_h, args.grid_w
    if grid_h is None or grid_w is None:
        sidecar = Path(args.patches).with_suffix(".grid.json")
        if sidecar.exists():
            obj = json.loads(sidecar.read_text(encoding="utf-8"))
            grid_h = grid_h if grid_h is not None else int(obj["grid_h"])
            grid_w = grid_w if grid_w is not None else int(obj["grid_w"])
    if grid_h is None or grid_w is None:
        raise ArgumentError(
            "grid shape unknown: pass --grid-h/--grid-w or provide a .grid.json sidecar"
        )
    if grid_h * grid_w != count:
        raise DimensionError(
            f"grid {grid_h}x{grid_w} does not match {count} patch embeddings"
        )
    return grid_h, grid_w


def _resolve_prompts(
    args: argparse.Namespace, config: RunConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (normal_vector, anomaly_vector)."""
    by_file = args.normal_prompt is not None or args.defect_prompt is not None
    by_label = args.label is not None or args.prompt_table is not None
    if by_file and by_label:
        raise ArgumentError("pass prompt files or a label with a table, not both")
    if by_file:
        if args.normal_prompt is None or args.defect_prompt is None:
            raise ArgumentError("both --normal-prompt and --defect-prompt are required")
        return (
            _load_single_vector(args.normal_prompt, "normal prompt"),
            _load_single_vector(args.defect_prompt, "defect prompt"),
        )
    if args.label is None or args.prompt_table is None:
        raise ArgumentError(
            "pass --normal-prompt/--defect-prompt files, or --label with --prompt-table"
        )
    templates = PromptTemplates(
        defect=config.positive_prompt_template,
        normal=config.negative_prompt_template,
    )
    defect_text, normal_text = instantiate_prompts(args.label, args.category, templates)
    table = load_centroids(args.prompt_table)
    rows = {text: i for i, text in enumerate(table.labels)}
    missing = [text for text in (normal_text, defect_text) if text not in rows]
    if missing:
        raise ManifestError(f"prompt table is missing entries for {missing!r}")
    vectors = table.centroids.rows64()
    return vectors[rows[normal_text]], vectors[rows[defect_text]]


def cmd_score(args: argparse.Namespace, config: RunConfig) -> dict:
    patches = load_embeddings(args.patches)
    grid_h, grid_w = _resolve_grid(args, patches.count)
    normal_vec, anomaly_vec = _resolve_prompts(args, config)

    diagnostics = None
    if args.hsp_dict:
        dictionaries = [load_embeddings(f).rows64() for f in args.hsp_dict]
        if len(dictionaries) == 1 and config.hsp_stages > 1:
            dictionaries = dictionaries * config.hsp_stages
        filtered, states = hierarchical_apply(
            dictionaries,
            patches.rows64(),
            lam=config.hsp_lambda,
            max_iter=config.hsp_iters,
            tol=config.hsp_tol,
            step_scale=config.hsp_mu,
        )
        patches = EmbeddingMatrix(data=filtered.astype(np.float32))
        diagnostics = [
            {
                "stage": i,
                "iterations": s.iterations,
                "converged": s.converged,
                "final_objective": s.final_objective,
                "sparsity": s.sparsity,
                "objective_trace": list(s.objective_trace),
            }
            for i, s in enumerate(states)
        ]

    grid = PatchGrid.from_matrix(grid_h, grid_w, patches)
    out_h = args.out_h if args.out_h is not None else grid_h * 4
    out_w = args.out_w if args.out_w is not None else grid_w * 4
    loc = localization_map(grid, normal_vec, anomaly_vec, out_h, out_w)
    score = image_score(loc, config.aggregator, config.topq)
    write_pgm(loc.values, str(args.out) + ".pgm")
    aggregator = (
        "max" if config.aggregator == "max" else f"topq({config.topq})"
    )
    payload = {
        "image_score": score,
        "aggregator": aggregator,
        "h": loc.height,
        "w": loc.width,
    }
    if args.diagnostics and diagnostics is not None:
        payload["hsp_diagnostics"] = diagnostics
    return payload


def _parse_score_lines(path: str) -> tuple[list[float], list[int]]:
    scores: list[float] = []
    labels: list[int] = []
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as err:
            raise ManifestError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
        if not isinstance(obj, dict) or "score" not in obj or "label" not in obj:
            raise ManifestError(f"{path}:{lineno}: need score and label keys")
        scores.append(float(obj["score"]))
        labels.append(int(obj["label"]))
    return scores, labels


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> dict:
    maps = args.map or []
    masks = args.mask or []
    if len(maps) != len(masks):
        raise ArgumentError(f"{len(maps)} maps but {len(masks)} masks")
    if args.scores is None and not maps:
        raise ArgumentError("nothing to evaluate: pass --scores and/or --map/--mask")
    image_auroc = None
    n = 0
    if args.scores is not None:
        scores, labels = _parse_score_lines(args.scores)
        image_auroc = auroc(np.asarray(scores), np.asarray(labels))
        n += len(scores)
    pixel_auroc = None
    if maps:
        map_arrays = [read_pgm(p).astype(np.float64) / 255.0 for p in maps]
        mask_arrays = [read_pgm(p) > 127 for p in masks]
        pixel_auroc = pixel_auroc_macro(map_arrays, mask_arrays)
        n += len(maps)
    return {"image_auroc": image_auroc, "pixel_auroc": pixel_auroc, "n": n}


def cmd_synth(args: argparse.Namespace, config: RunConfig) -> dict:
    plan = load_plan(args.spec)
    out = Path(args.out)
    if isinstance(plan, KbPlan):
        write_kb_fixture(gen_planted_kb(plan, seed=config.seed), out)
        kind = "kb"
    else:
        assert isinstance(plan, DefectPlan)
        write_defect_fixture(gen_defect_grid(plan, seed=config.seed), out)
        kind = "defect"
    files = sorted(p.name for p in out.iterdir() if p.is_file())
    return {"kind": kind, "out": str(out), "files": files, "seed": config.seed}


def cmd_bench(args: argparse.Namespace, config: RunConfig) -> dict:
    spec = BenchSpec(
        stage=args.stage,
        repeats=args.repeat,
        n=args.n,
        dim=args.dim,
        budget=config.budget,
        seed=config.seed,
    )
    return bench(spec)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {key: getattr(args, key) for key in CONFIG_KEYS}
    try:
        config = RunConfig.from_layers(args.config, overrides)
        payload = args.handler(args, config)
    except EngineError as err:
        print(f"error: {err}", file=sys.stderr)
        return exit_code_for(err)
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
