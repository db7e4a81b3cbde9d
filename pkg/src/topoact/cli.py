"""Command-line entry point: ``python -m topoact <command> ...``.

Every run writes ``run_report.json`` next to its outputs. The report holds
the resolved configuration, every derived seed, library versions and a
SHA-256 digest per output file; ``replay`` re-executes a report and checks
that each output is reproduced byte for byte.

Exit codes: 0 success, 2 usage error, 3 data/format error, 4 numerical or
degenerate-input error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data_io import (DatasetManifest, gen_condition_surrogate, gen_layer_stack, gen_regular_ngon, gen_two_circles,
                      read_activations, read_csv_activations, write_activations, write_csv_activations, write_dataset)
from .dispersion import (ABLATION_MODES, LABELS, DiffRepresentation, compare_conditions, cosine_comparison,
                         layer_dispersion, split_ablation)
from .errors import DataError, SizeError, TopoactError, UsageError
from .features import summaries_to_csv
from .global_pipeline import run_global
from .local_pipeline import DEFAULT_STATISTICS, VARIANTS, layer_sweep, peak_table, peak_table_csv
from .ph import barcode
from . import svg

OUT_ENV = "TOPOACT_OUT"
REPORT_NAME = "run_report.json"
RUNTIME_KEYS = ("out", "workers", "command", "handler", "report")


def _seed(*keys) -> int:
    """Deterministic 32-bit seed derived from a tuple of integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _csv_list(text, cast=str):
    if text is None or text == "":
        return None
    return [cast(t.strip()) for t in str(text).split(",") if t.strip()]


def _threshold(text):
    if text in ("auto", None):
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"threshold must be a number, 'inf' or 'auto', got {text!r}") from None


def _load_cloud(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    return read_csv_activations(path) if path.suffix.lower() == ".csv" else read_activations(path)


def _write_text(path: Path, text: str) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


# ---------------------------------------------------------------- commands


def cmd_generate(cfg, out: Path, workers: int):
    kind = cfg["kind"]
    seeds = {"seed": cfg["seed"]}
    if kind in ("two-circles", "ngon"):
        cloud = (gen_two_circles(cfg["n"], cfg["noise"], cfg["seed"]) if kind == "two-circles"
                 else gen_regular_ngon(cfg["n"], cfg["radius"]))
        if cfg["format"] == "csv":
            path = out / f"{kind}.csv"
            write_csv_activations(path, cloud.points)
        else:
            path = out / f"{kind}.tlns"
            write_activations(path, cloud.points, 0, "clean")
        return [path], seeds
    n_layers, N, D = cfg["layers"], cfg["n_samples"], cfg["dim"]
    if kind == "condition-surrogate":
        stacks = {"clean": np.empty((n_layers, N, D)), "poisoned": np.empty((n_layers, N, D))}
        for layer in range(n_layers):
            seeds[f"layer_{layer}"] = s = _seed(cfg["seed"], layer)
            g = gen_condition_surrogate(N, D, cfg["spread_clean"], cfg["spread_poisoned"], s)
            stacks["clean"][layer], stacks["poisoned"][layer] = g["clean"].points, g["poisoned"].points
    elif kind == "layer-stack":
        seeds["clean"], seeds["poisoned"] = s_c, s_p = _seed(cfg["seed"], 0), _seed(cfg["seed"], 1)
        stacks = {
            "clean": gen_layer_stack(N, n_layers, D, s_c, cfg["layer_correlation"]),
            "poisoned": gen_layer_stack(N, n_layers, D, s_p, cfg["layer_correlation"],
                                        loop_pairs=_csv_list(cfg["loop_pairs"], int) or ()),
        }
    else:
        raise UsageError(f"unknown generator {kind!r}")
    manifest = write_dataset(out, stacks, model=f"synthetic-{kind}")
    return sorted(manifest.files[layer][c] for layer in manifest.layers for c in manifest.files[layer]) + \
        [out / "manifest.json"], seeds


def cmd_barcode(cfg, out: Path, workers: int):
    if cfg["max_dim"] not in (0, 1):
        raise UsageError(f"unsupported --max-dim {cfg['max_dim']}; only 0 and 1 are available")
    cloud = _load_cloud(cfg["input"])
    bc = barcode(cloud, cfg["metric"], cfg["max_dim"], _threshold(cfg["threshold"]))
    path = out / "barcode.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dim", "birth", "death", "truncated"])
        for d, b, e, t in zip(bc.dims, bc.births, bc.deaths, bc.truncated):
            w.writerow([int(d), repr(float(b)), repr(float(e)), int(t)])
    paths = [path]
    if cfg["svg"]:
        paths.append(out / "barcode.svg")
        svg.barcode_svg(bc, paths[-1])
    return paths, {}


def cmd_global(cfg, out: Path, workers: int):
    manifest = DatasetManifest.load(cfg["manifest"])
    conds = _csv_list(cfg["conditions"])
    if len(conds) != 2:
        raise UsageError("--conditions needs exactly two names: normal,adversarial")
    layers = _csv_list(cfg["layers"], int) or manifest.layers
    manifest.require(layers, conds)
    paths, seeds = [], {}
    for layer in layers:
        seeds[f"layer_{layer}"] = s = _seed(cfg["seed"], layer)
        report = run_global(manifest.load_cloud(layer, conds[0]), manifest.load_cloud(layer, conds[1]), cfg["K"], cfg["k"],
                            s, layer=layer, metric=cfg["metric"], threshold=_threshold(cfg["threshold"]),
                            count_infinite_h0=cfg["count_infinite_h0"], workers=workers,
                            prune_threshold=cfg["prune_threshold"])
        paths += report.write(out)
        paths.append(_write_text(out / f"layer_{layer}_summaries.csv", summaries_to_csv(report.summaries)))
        if cfg["svg"]:
            paths.append(out / f"layer_{layer}_pca.svg")
            svg.scatter_svg(report.pca.scores[:, 0], report.pca.scores[:, 1],
                            np.where(report.table.labels == 1, conds[1], conds[0]), paths[-1],
                            f"Layer {layer} PCA", "PC1", "PC2")
            paths.append(out / f"layer_{layer}_shap.svg")
            svg.beeswarm_svg(report.shap.values, report.shap.feature_values, list(report.prune.kept), paths[-1],
                             f"Layer {layer} attributions")
    return paths, seeds


def cmd_local(cfg, out: Path, workers: int):
    manifest = DatasetManifest.load(cfg["manifest"])
    conds = _csv_list(cfg["conditions"])
    stats = tuple(_csv_list(cfg["stats"]) or DEFAULT_STATISTICS)
    variants = tuple(_csv_list(cfg["variants"]) or VARIANTS)
    ks = _csv_list(cfg["peak_k"], int)
    paths, seeds = [], {"sweep": cfg["seed"], "peaks": _seed(cfg["seed"], 1)}
    for interval in _csv_list(cfg["interval"], int):
        sweep = layer_sweep(manifest, interval, cfg["n"], stats, cfg["seed"], variants, conds, workers=workers)
        stem = f"sweep_interval{interval}"
        paths.append(_write_text(out / f"{stem}.csv", sweep.to_csv()))
        paths.append(_write_text(out / f"{stem}.json", sweep.to_json()))
        rows = peak_table(sweep, ks, cfg["n_permutations"], seeds["peaks"])
        paths.append(_write_text(out / f"peaks_interval{interval}.csv", peak_table_csv(rows)))
        paths.append(_write_text(out / f"peaks_interval{interval}.json", json.dumps(rows, indent=2, sort_keys=True)))
        if cfg["svg"]:
            x = [a for a, _ in sweep.pairs]
            for stat in stats:
                paths.append(out / f"{stem}_{stat}_ratio.svg")
                svg.line_svg(x, {v: sweep.curve(stat, v, "ratio") for v in variants}, paths[-1],
                             f"{stat}: {conds[0]}/{conds[1]}", "layer", "ratio")
    return paths, seeds


def _representations(manifest: DatasetManifest) -> list[DiffRepresentation]:
    labels = [c for c in manifest.conditions() if c in LABELS]
    if not labels:
        raise DataError(f"manifest has no conditions among {LABELS}")
    layers = sorted(manifest.layers)
    if manifest.representation == "difference":
        steps = [(None, layer) for layer in layers]
    elif manifest.representation == "activation":
        if len(layers) < 2:
            raise DataError("activation manifests need at least two layers to form differences")
        steps = list(zip(layers[:-1], layers[1:]))
    else:
        raise DataError(f"unknown representation {manifest.representation!r}")
    reps = []
    for prev, layer in steps:
        blocks, labs = [], []
        for c in labels:
            if c not in manifest.files.get(layer, {}):
                continue
            X = manifest.load_cloud(layer, c).points
            if prev is not None:
                P = manifest.load_cloud(prev, c).points
                if P.shape != X.shape:
                    raise DataError(f"layers {prev} and {layer} differ in shape for {c!r}")
                X = X - P
            blocks.append(X)
            labs += [c] * X.shape[0]
        reps.append(DiffRepresentation(np.vstack(blocks), np.array(labs), layer))
    return reps


def cmd_dispersion(cfg, out: Path, workers: int):
    manifest = DatasetManifest.load(cfg["manifest"])
    reps = _representations(manifest)
    ratios = layer_dispersion(reps, cfg["k_neighbors"], workers)
    paths, seeds = [], {"ablation": _seed(cfg["seed"], 0), "cosine": _seed(cfg["seed"], 1)}

    path = out / "dispersion_ratios.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "row", "label", "ratio"])
        for rep, r in zip(reps, ratios):
            for i, (lab, v) in enumerate(zip(rep.labels, r)):
                w.writerow([rep.layer, i, lab, repr(float(v))])
    paths.append(path)

    present = sorted(set(np.concatenate([r.labels for r in reps]).tolist()))
    if "clean" in present:
        for other in (x for x in present if x != "clean"):
            res = compare_conditions(reps, "clean", other, cfg["k_neighbors"], ratios=ratios)
            paths.append(_write_text(out / f"dispersion_clean_vs_{other}.csv", res.to_csv()))
            paths.append(_write_text(out / f"dispersion_clean_vs_{other}.json", res.to_json()))

    skipped = {}
    for mode in ABLATION_MODES:
        try:
            res = split_ablation(reps, mode, seeds["ablation"], cfg["k_neighbors"], ratios=ratios)
        except SizeError as exc:
            skipped[mode] = str(exc)
            continue
        paths.append(_write_text(out / f"ablation_{mode}.csv", res.to_csv()))
        paths.append(_write_text(out / f"ablation_{mode}.json", res.to_json()))

    cosine_rows = []
    for rep in reps:
        for mode in ("clean_poisoned",) + ABLATION_MODES:
            try:
                cb = cosine_comparison(rep, mode, cfg["subsample"], cfg["iterations"], _seed(seeds["cosine"], rep.layer))
            except SizeError as exc:
                skipped[f"cosine_{mode}_layer{rep.layer}"] = str(exc)
                continue
            cosine_rows.append({"layer": rep.layer, "mode": mode, **cb.to_dict()})
    paths.append(_write_text(out / "cosine.json", json.dumps(cosine_rows, indent=2, sort_keys=True)))
    if skipped:
        paths.append(_write_text(out / "skipped.json", json.dumps(skipped, indent=2, sort_keys=True)))
    return paths, seeds


# ------------------------------------------------------------------ report


def _versions() -> dict:
    import numba
    import scipy
    import sklearn

    return {
        "topoact": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "scikit-learn": sklearn.__version__,
    }


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _resolve_config(args: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in RUNTIME_KEYS}
    for key in ("input", "manifest"):
        if cfg.get(key) is not None:
            cfg[key] = str(Path(cfg[key]).resolve())
    return cfg


def execute(command: str, cfg: dict, out: Path, workers: int) -> dict:
    """Run one command and write its run report; returns the report."""
    out.mkdir(parents=True, exist_ok=True)
    paths, seeds = HANDLERS[command](cfg, out, workers)
    report = {
        "command": command,
        "config": cfg,
        "seeds": seeds,
        "versions": _versions(),
        "outputs": {str(p.relative_to(out)): _digest(p) for p in sorted(set(paths))},
    }
    (out / REPORT_NAME).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def cmd_replay(args) -> int:
    src = Path(args.report)
    if not src.exists():
        raise DataError(f"run report not found: {src}")
    try:
        recorded = json.loads(src.read_text())
        command, cfg = recorded["command"], recorded["config"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"{src}: not a run report ({exc})") from exc
    if command not in HANDLERS:
        raise DataError(f"{src}: unknown command {command!r}")
    out = Path(args.out) if args.out else src.parent / "replay"
    report = execute(command, cfg, out, args.workers)
    bad = sorted(name for name, digest in recorded["outputs"].items() if report["outputs"].get(name) != digest)
    bad += sorted(set(report["outputs"]) - set(recorded["outputs"]))
    if bad:
        raise DataError(f"replay differs from the recorded run in: {', '.join(bad)}")
    print(f"replay reproduced {len(report['outputs'])} outputs in {out}")
    return 0


HANDLERS = {
    "generate": cmd_generate,
    "barcode": cmd_barcode,
    "global": cmd_global,
    "local": cmd_local,
    "dispersion": cmd_dispersion,
}


def _workers_default() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="topoact", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", default=None, help=f"output directory (default: ${OUT_ENV} or ./topoact_out)")
        sp.add_argument("--workers", type=int, default=_workers_default(), help="worker threads")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    g = sub.add_parser("generate", help="write a synthetic point cloud or dataset")
    g.add_argument("kind", choices=("two-circles", "ngon", "condition-surrogate", "layer-stack"))
    g.add_argument("--n", type=int, default=50, help="points (two-circles, ngon)")
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--radius", type=float, default=1.0)
    g.add_argument("--format", choices=("csv", "tlns"), default="csv")
    g.add_argument("--n-samples", type=int, default=5000)
    g.add_argument("--dim", type=int, default=16)
    g.add_argument("--layers", type=int, default=4)
    g.add_argument("--spread-clean", type=float, default=0.5)
    g.add_argument("--spread-poisoned", type=float, default=1.0)
    g.add_argument("--layer-correlation", type=float, default=0.0)
    g.add_argument("--loop-pairs", default="", help="comma-separated layer indices with an injected loop")
    common(g)

    b = sub.add_parser("barcode", help="Rips barcode of one point cloud")
    b.add_argument("input", help=".csv (header row) or binary activation file")
    b.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    b.add_argument("--max-dim", type=int, default=1)
    b.add_argument("--threshold", default="auto")
    b.add_argument("--svg", action="store_true")
    common(b, seed=False)

    gl = sub.add_parser("global", help="subsample/summarize/classify per layer")
    gl.add_argument("manifest")
    gl.add_argument("--layers", default=None, help="comma-separated layer ids (default: all)")
    gl.add_argument("--conditions", default="clean,poisoned")
    gl.add_argument("--K", type=int, default=64, help="subsamples per condition")
    gl.add_argument("--k", type=int, default=4096, help="points per subsample")
    gl.add_argument("--prune-threshold", type=float, default=0.5)
    gl.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    gl.add_argument("--threshold", default="auto")
    gl.add_argument("--count-infinite-h0", action="store_true")
    gl.add_argument("--svg", action="store_true")
    common(gl)

    lo = sub.add_parser("local", help="layer-pair sweeps and peak analysis")
    lo.add_argument("manifest")
    lo.add_argument("--interval", default="1,3,10")
    lo.add_argument("--n", type=int, default=1000)
    lo.add_argument("--stats", default=",".join(DEFAULT_STATISTICS))
    lo.add_argument("--variants", default=",".join(VARIANTS))
    lo.add_argument("--conditions", default="clean,poisoned")
    lo.add_argument("--peak-k", default="1,3,5")
    lo.add_argument("--n-permutations", type=int, default=10000)
    lo.add_argument("--svg", action="store_true")
    common(lo)

    d = sub.add_parser("dispersion", help="dispersion ratios, ablations and cosine bootstraps")
    d.add_argument("manifest")
    d.add_argument("--k-neighbors", type=int, default=30)
    d.add_argument("--subsample", type=int, default=5000)
    d.add_argument("--iterations", type=int, default=3)
    common(d)

    r = sub.add_parser("replay", help="re-run a recorded run report and verify its outputs")
    r.add_argument("report")
    r.add_argument("--out", default=None, help="output directory (default: <report dir>/replay)")
    r.add_argument("--workers", type=int, default=_workers_default())
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.workers < 1:
            raise UsageError(f"--workers must be positive, got {args.workers}")
        if args.command == "replay":
            return cmd_replay(args)
        out = Path(args.out or os.environ.get(OUT_ENV) or "topoact_out")
        execute(args.command, _resolve_config(args), out, args.workers)
        print(f"wrote {out / REPORT_NAME}")
        return 0
    except TopoactError as exc:
        msg = {"error": type(exc).__name__, "exit_code": exc.exit_code, "message": str(exc)}
        if hasattr(exc, "code"):
            msg["code"] = exc.code
        print(json.dumps(msg), file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
