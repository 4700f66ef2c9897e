"""Command-line surface: synth, noise, cluster, denoise, eval, spectral.

Every command resolves its flags into a run manifest written next to the
outputs, takes all randomness from --seed, and uses stable exit codes:
0 success, 1 runtime/numeric failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import DivergenceError
from .cluster import ClusterTrainConfig, cluster_forward, train_cluster_net, save_params
from .graphs import (
    Graph,
    GraphError,
    NoiseSpec,
    inject_noise,
    load_graph,
    modularity,
    read_manifest,
    save_graph,
    synth_cluster_graph,
    write_manifest,
)
from .metrics import cluster_metrics, psnr, wl_similarity
from .spectral import SizeLimitError, verification_report
from .training import AUTO, TrainConfig, denoise, derive_seed, select_k
from .cluster import ClusterAssignment

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _write_run_manifest(out_dir: Path, command: str, args: argparse.Namespace) -> None:
    resolved = {
        key: (str(val) if isinstance(val, Path) else val)
        for key, val in sorted(vars(args).items())
        if key != "func"
    }
    manifest = {"tool": "gdn", "version": __version__, "command": command, "flags": resolved}
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _input_graphs(path_str: str) -> list[tuple[Path, int | None]]:
    path = Path(path_str)
    if not path.exists():
        raise GraphError(f"input {path} does not exist")
    if path.suffix == ".gdn":
        return [(path, None)]
    return read_manifest(path)


def _parse_k(value: str):
    if value.lower() == "auto":
        return AUTO
    return int(value)


def cmd_synth(args) -> int:
    if not (0 <= args.modularity < 1):
        raise UsageError("--modularity must be in [0, 1)")
    if args.count < 1 or args.n < 1 or args.k < 1:
        raise UsageError("--count, --n and --k must be positive")
    out = _out_dir(args)
    entries = []
    for idx in range(args.count):
        g, labels = synth_cluster_graph(
            args.n, args.k, args.modularity, args.avg_degree, derive_seed(args.seed, idx)
        )
        name = f"graph_{idx:04d}.gdn"
        save_graph(g, out / name)
        (out / f"labels_{idx:04d}.txt").write_text(
            "\n".join(str(int(c)) for c in labels) + "\n"
        )
        entries.append(name)
    write_manifest(out / "manifest.txt", entries)
    _write_run_manifest(out, "synth", args)
    print(f"wrote {args.count} graphs to {out}")
    return EXIT_OK


def cmd_noise(args) -> int:
    out = _out_dir(args)
    entries = _input_graphs(args.input)
    names = []
    for idx, (path, label) in enumerate(entries):
        g = load_graph(path)
        noisy = inject_noise(
            g,
            NoiseSpec(args.add_fraction, args.del_fraction, derive_seed(args.seed, idx)),
        )
        name = f"noisy_{idx:04d}.gdn"
        save_graph(noisy, out / name)
        names.append((name, label) if label is not None else name)
    write_manifest(out / "manifest.txt", names)
    _write_run_manifest(out, "noise", args)
    print(f"wrote {len(names)} noisy graphs to {out}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    out = _out_dir(args)
    g = load_graph(args.input)
    cfg = _train_config(args)
    k = cfg.k
    if k is AUTO:
        k = select_k(g, cfg.k_min, min(cfg.k_max, g.n), cfg)
    cc = ClusterTrainConfig(
        epochs=cfg.epochs, lr=cfg.lr, lr_decay=cfg.lr_decay,
        dropout=cfg.dropout, varphi=cfg.varphi, hidden=cfg.hidden, seed=cfg.seed,
    )
    params, history = train_cluster_net([g], k, cc)
    assignment = ClusterAssignment.from_soft(cluster_forward(g, params).value)
    (out / "assignment.txt").write_text(
        "\n".join(str(int(c)) for c in assignment.labels()) + "\n"
    )
    save_params(out / "cluster_params.ckpt", params)
    (out / "loss.csv").write_text(
        "epoch,l_u\n" + "\n".join(f"{e},{v:.6f}" for e, v in enumerate(history)) + "\n"
    )
    _write_run_manifest(out, "cluster", args)
    print(f"k={k} assignment written to {out}")
    return EXIT_OK


def _denoise_one(task):
    idx, path, label, cfg_dict, dump_probs = task
    cfg = TrainConfig(**cfg_dict)
    g = load_graph(path)
    if dump_probs:
        result, report, probs = denoise(g, cfg, return_probs=True)
    else:
        result, report = denoise(g, cfg)
        probs = None
    return idx, label, result, report, probs


def cmd_denoise(args) -> int:
    out = _out_dir(args)
    entries = _input_graphs(args.input)
    cfg = _train_config(args)
    tasks = []
    for idx, (path, label) in enumerate(entries):
        sub = asdict(cfg)
        sub["seed"] = derive_seed(args.seed, idx)
        tasks.append((idx, path, label, sub, args.dump_probs))
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_denoise_one, tasks))
    else:
        results = [_denoise_one(t) for t in tasks]
    names = []
    for idx, label, result, report, probs in sorted(results, key=lambda r: r[0]):
        name = f"denoised_{idx:04d}.gdn"
        save_graph(result.graph, out / name)
        (out / f"train_{idx:04d}.csv").write_text(report.to_csv())
        (out / f"assignment_{idx:04d}.txt").write_text(
            "\n".join(str(int(c)) for c in report.final_assignment.labels()) + "\n"
        )
        if probs is not None:
            probs.write(out / f"probs_{idx:04d}.txt")
        names.append((name, label) if label is not None else name)
    write_manifest(out / "manifest.txt", names)
    _write_run_manifest(out, "denoise", args)
    print(f"wrote {len(names)} denoised graphs to {out}")
    return EXIT_OK


def _label_files(spec: str) -> list[Path]:
    path = Path(spec)
    if path.is_dir():
        return sorted(path.glob("*.txt"))
    return [Path(line) for line in path.read_text().splitlines() if line.strip()]


def _read_labels(path: Path) -> np.ndarray:
    return np.asarray([int(tok) for tok in path.read_text().split()])


def cmd_eval(args) -> int:
    clean_entries = _input_graphs(args.clean)
    denoised_entries = _input_graphs(args.denoised)
    if len(clean_entries) != len(denoised_entries):
        raise UsageError(
            f"manifest length mismatch: {len(clean_entries)} clean vs "
            f"{len(denoised_entries)} denoised"
        )
    truth_files = pred_files = None
    if args.truth and args.pred:
        truth_files = _label_files(args.truth)
        pred_files = _label_files(args.pred)
        if len(truth_files) != len(clean_entries) or len(pred_files) != len(clean_entries):
            raise UsageError("label file counts must match the graph manifests")
    lines = ["graph_id,psnr,wl,acc,nmi,f1"]
    psnrs, wls = [], []
    for idx, ((cpath, _), (dpath, _)) in enumerate(zip(clean_entries, denoised_entries)):
        g_clean = load_graph(cpath)
        g_hat = load_graph(dpath)
        p = psnr(g_clean, g_hat)
        w = wl_similarity(g_clean, g_hat, args.wl_h)
        psnrs.append(p)
        wls.append(w)
        if truth_files is not None:
            acc, nmi, f1 = cluster_metrics(
                _read_labels(pred_files[idx]), _read_labels(truth_files[idx])
            )
            lines.append(f"{idx},{p:.6f},{w:.6f},{acc:.6f},{nmi:.6f},{f1:.6f}")
        else:
            lines.append(f"{idx},{p:.6f},{w:.6f},,,")
    lines.append(f"mean,{float(np.mean(psnrs)):.6f},{float(np.mean(wls)):.6f},,,")
    csv_text = "\n".join(lines) + "\n"
    if args.out:
        out = _out_dir(args)
        (out / "eval.csv").write_text(csv_text)
        _write_run_manifest(out, "eval", args)
    sys.stdout.write(csv_text)
    return EXIT_OK


def cmd_spectral(args) -> int:
    g = load_graph(args.input)
    text = verification_report(g, args.q, args.epsilon, args.trials, args.seed)
    if args.out:
        out = _out_dir(args)
        (out / "spectral.txt").write_text(text)
        _write_run_manifest(out, "spectral", args)
    sys.stdout.write(text)
    return EXIT_OK


class UsageError(ValueError):
    pass


def _train_config(args) -> TrainConfig:
    budget = args.budget
    if budget is not None and (budget < 0 or budget % 2):
        raise UsageError("--budget must be even and nonnegative")
    return TrainConfig(
        epochs=args.epochs,
        lr=args.lr,
        lr_decay=args.lr_decay,
        dropout=args.dropout,
        varphi=args.varphi,
        kl_weight=args.kl_weight,
        budget=budget,
        k=args.k,
        seed=args.seed,
        latent_dim=args.latent_dim,
        hidden=args.hidden,
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--lr-decay", dest="lr_decay", type=float, default=0.99)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--varphi", type=float, default=0.5)
    p.add_argument("--kl-weight", dest="kl_weight", type=float, default=1.0)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--k", type=_parse_k, default=AUTO, help="cluster count or 'auto'")
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=16)
    p.add_argument("--hidden", type=int, default=32)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdn", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate planted-partition graphs")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--modularity", type=float, required=True)
    p.add_argument("--avg-degree", dest="avg_degree", type=float, default=8.0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("noise", help="inject structural noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--add", dest="add_fraction", type=float, default=0.1)
    p.add_argument("--del", dest="del_fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("cluster", help="train the cluster network on one graph")
    p.add_argument("--in", dest="input", required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("denoise", help="denoise graphs end to end")
    p.add_argument("--in", dest="input", required=True)
    _add_train_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--dump-probs", dest="dump_probs", action="store_true",
                   help="also write the scored pair probabilities per graph")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="score denoised graphs against clean ones")
    p.add_argument("--clean", required=True)
    p.add_argument("--denoised", required=True)
    p.add_argument("--truth", default=None, help="truth label files (dir or list file)")
    p.add_argument("--pred", default=None, help="predicted label files (dir or list file)")
    p.add_argument("--wl-h", dest="wl_h", type=int, default=3)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectral", help="spectral stability verification")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_spectral)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (DivergenceError, SizeLimitError, AssertionError, ArithmeticError) as exc:
        print(f"gdn: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, GraphError, ValueError, OSError) as exc:
        print(f"gdn: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
