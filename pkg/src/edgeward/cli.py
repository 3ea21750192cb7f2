"""Batch pipelines: ingest, train, attack, defend, infer, experiment, report.

Every run writes a manifest with the fully resolved configuration and the
toolkit version; all other output files are deterministic functions of that
configuration, so re-running a manifest reproduces them byte for byte. The
manifest's timestamp is the single intentionally varying field.

Exit codes: 0 success, 2 usage or precondition failure, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .autodiff import Tensor2
from .attack import (
    AttackSpec,
    degree_distribution_report,
    extract_victim_graph,
    run_attack,
)
from .defense import AngcnConfig, infer_anonymous, load_angcn, save_angcn, train_angcn
from .graphs import (
    build_laplacian,
    eigendecompose,
    load_cora,
    load_graph,
    save_graph,
    synth_graph,
)
from .models import (
    SemiGcnModel,
    accuracy,
    freeze,
    init_semi_model,
    init_spectral_model,
    predict,
    semi_params_dict,
    spectral_params_dict,
    train_model,
    write_trace,
)
from .rng import substream
from .signals import (
    NodeTrajectory,
    default_delta_sweep,
    delete_node_experiment,
    dft,
    most_connected_nodes,
    perturb_u_experiment,
    reconstruct,
    write_change_csv,
    write_deviation_csv,
)

_LAPLACIANS = ("combinatorial", "normalized")
_PROPAGATIONS = ("raw", "renormalized")


# ---------------------------------------------------------------------------
# plumbing


def _out_dir(args) -> Path:
    root = args.out_dir or os.environ.get("EDGEWARD_OUT_DIR") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_config_file(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    return doc


def _resolve(args, defaults: dict) -> dict:
    """flags > config file > defaults, missing flags parsed as None."""
    config = _load_config_file(getattr(args, "config", None))
    resolved = {}
    for key, fallback in defaults.items():
        flag = getattr(args, key, None)
        if flag is None:
            flag = config[key] if key in config else fallback
        resolved[key] = flag
    return resolved


def _write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_manifest(out: Path, command: str, resolved: dict) -> None:
    _write_json(out / "manifest.json", {
        "command": command,
        "config": resolved,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    })


def _int_list(text: str) -> list:
    return [int(x) for x in str(text).split(",") if str(x).strip()]


def _float_list(text: str) -> list:
    return [float(x) for x in str(text).split(",") if str(x).strip()]


# ---------------------------------------------------------------------------
# model checkpoints (family tag travels in a meta row)

_FAMILY_SPECTRAL = 0.0
_FAMILY_SEMI = 1.0


def _save_model(path, model, variant_code: float) -> None:
    if isinstance(model, SemiGcnModel):
        params = dict(semi_params_dict(model))
        family = _FAMILY_SEMI
    else:
        params = dict(spectral_params_dict(model))
        family = _FAMILY_SPECTRAL
    params["model_meta"] = np.array([[family, variant_code]])
    ad.save_checkpoint(path, params)


def _load_semi_model(path) -> SemiGcnModel:
    doc = ad.load_checkpoint(path)
    if "w1" not in doc or "w2" not in doc:
        raise ValueError(f"{path}: attack needs a semi-GCN checkpoint")
    variant = 0.0
    if "model_meta" in doc:
        variant = float(doc["model_meta"].ravel()[1])
    model = SemiGcnModel(
        w1=Tensor2(doc["w1"], name="w1"),
        w2=Tensor2(doc["w2"], name="w2"),
        propagation=_PROPAGATIONS[int(variant)],
    )
    return model


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    resolved = _resolve(args, {"cora": None, "synth": None, "graph_out": None,
                               "split": None})
    if bool(resolved["cora"]) == bool(resolved["synth"]):
        raise ValueError("ingest takes exactly one of --cora or --synth")

    if resolved["cora"]:
        content, cites = resolved["cora"]
        split = (140, 500, 1000)
        if resolved["split"] is not None:
            split = tuple(_int_list(resolved["split"]))
            if len(split) != 3:
                raise ValueError("--split takes train,val,test sizes")
        g, report = load_cora(content, cites, split_sizes=split)
    else:
        g = synth_graph(resolved["synth"])
        report = {"n_nodes": g.n_nodes, "n_edges": len(g.edges),
                  "skipped_cites": 0, "duplicate_cites": 0}
        if g.labels is not None:
            report["n_classes"] = g.n_classes

    dest = Path(resolved["graph_out"]) if resolved["graph_out"] else out / "graph.json"
    save_graph(g, dest)
    resolved["graph_out"] = str(dest)
    _write_json(out / "ingest_report.json", report)
    _write_manifest(out, "ingest", resolved)
    print(f"ingested {report['n_nodes']} nodes, {report['n_edges']} edges -> {dest}")
    return 0


# ---------------------------------------------------------------------------
# train


_TRAIN_DEFAULTS = {
    "model": "spectral",
    "epochs": 200,
    "lr": 0.01,
    "l2": 5e-4,
    "hidden": 16,
    "optimizer": "adam",
    "laplacian": "normalized",
    "propagation": "renormalized",
    "seed": 0,
}


def cmd_train(args) -> int:
    out = _out_dir(args)
    resolved = _resolve(args, _TRAIN_DEFAULTS)
    resolved["graph"] = args.graph
    g = load_graph(args.graph)
    if g.labels is None:
        raise ValueError("training needs a labeled graph")

    kind = resolved["laplacian"]
    if resolved["model"] == "spectral":
        basis = eigendecompose(build_laplacian(g, kind=kind), kind=kind)
        model = init_spectral_model(basis, g.n_features, g.n_classes,
                                    seed=resolved["seed"])
        variant = float(_LAPLACIANS.index(kind))
    elif resolved["model"] == "semi":
        model = init_semi_model(g.n_features, resolved["hidden"], g.n_classes,
                                seed=resolved["seed"],
                                propagation=resolved["propagation"])
        variant = float(_PROPAGATIONS.index(resolved["propagation"]))
    else:
        raise ValueError(f"unknown model {resolved['model']!r}")

    result = train_model(model, g, epochs=resolved["epochs"],
                         optimizer=resolved["optimizer"], lr=resolved["lr"],
                         l2_coefficient=resolved["l2"])
    _save_model(out / "checkpoint.json", model, variant)
    write_trace(out / "trace.jsonl", result.trace)

    metrics = {"final": result.final}
    if g.test_mask is not None and len(g.test_mask):
        metrics["test_acc"] = accuracy(model, g, g.test_mask)
        print(f"test accuracy {metrics['test_acc']:.4f}")
    _write_json(out / "metrics.json", metrics)
    _write_manifest(out, "train", resolved)
    return 0


# ---------------------------------------------------------------------------
# attack


_ATTACK_DEFAULTS = {
    "mode": "single",
    "theta": 1.0,
    "reg_weight": 0.05,
    "epochs": 300,
    "lr": 0.01,
    "optimizer": "adam",
    "stop_when_successful": False,
    "binarize_in_loop": False,
    "freeze_check": False,
    "seed": 0,
}


def cmd_attack(args) -> int:
    out = _out_dir(args)
    resolved = _resolve(args, _ATTACK_DEFAULTS)
    resolved.update({"graph": args.graph, "checkpoint": args.checkpoint,
                     "targets": args.targets, "desired": args.desired})
    g = load_graph(args.graph)
    model = _load_semi_model(args.checkpoint)
    freeze(model)

    targets = _int_list(args.targets)
    desired = _int_list(args.desired)
    clean = predict(model, g)
    for k, want in zip(targets, desired):
        if not 0 <= k < g.n_nodes:
            raise ValueError(f"target {k} out of range")
        if clean[k] == want:
            raise ValueError(
                f"target {k} already predicts class {want}: nothing to attack")

    spec = AttackSpec(
        targets=tuple(targets), desired_labels=tuple(desired),
        mode=resolved["mode"], theta=resolved["theta"],
        reg_weight=resolved["reg_weight"], epochs=resolved["epochs"],
        lr=resolved["lr"], optimizer=resolved["optimizer"],
        seed=resolved["seed"], propagation=model.propagation,
        binarize_in_loop=resolved["binarize_in_loop"],
        stop_when_successful=resolved["stop_when_successful"],
    )
    result = run_attack(model, g, spec)
    victim = extract_victim_graph(result, g)

    report = result.to_json_dict()
    if g.labels is not None and g.test_mask is not None and len(g.test_mask):
        test = np.asarray(g.test_mask)
        labels = np.asarray(g.labels)
        report["clean_acc"] = float(np.mean(result.clean_predictions[test] == labels[test]))
        report["attacked_acc"] = float(np.mean(result.attacked_predictions[test] == labels[test]))
    report["success_rate"] = float(np.mean(result.success))

    save_graph(victim, out / "victim_graph.json")
    _write_json(out / "attack_report.json", report)
    _write_json(out / "degree_report.json", degree_distribution_report(g, victim))
    _write_json(out / "metrics.json", {k: report[k] for k in
                ("success_rate", "perturbation_count", "clean_acc", "attacked_acc")
                if k in report})
    _write_manifest(out, "attack", resolved)

    if resolved["freeze_check"]:
        from .graphs import build_adjacency
        a = build_adjacency(g)
        for k in targets:
            if not (np.array_equal(result.a_hat[k], a[k])
                    and np.array_equal(result.a_hat[:, k], a[:, k])):
                raise RuntimeError(f"target {k} row changed")   # internal: must not happen
        print("freeze check ok: target rows untouched")
    print(f"attack success {report['success_rate']:.2f} with "
          f"{report['perturbation_count']} edits")
    return 0


# ---------------------------------------------------------------------------
# defend


_DEFEND_DEFAULTS = {
    "epochs": 1500,
    "inner_epochs": 5,
    "lr_d": 0.01,
    "lr_g": 0.001,
    "q": 0.1,
    "sigma": 1.0,
    "epsilon": float(np.exp(-0.5) / np.sqrt(2.0 * np.pi)),
    "noise_width": 32,
    "hidden": 64,
    "eval_every": 25,
    "optimizer": "adam",
    "sample_pool": "labeled",
    "laplacian": "normalized",
    "seed": 0,
}


def cmd_defend(args) -> int:
    out = _out_dir(args)
    resolved = _resolve(args, _DEFEND_DEFAULTS)
    resolved["graph"] = args.graph
    if resolved["epochs"] < 1:
        raise ValueError("defend needs at least one outer epoch: nothing to train")
    g = load_graph(args.graph)

    cfg = AngcnConfig(
        noise_width=resolved["noise_width"], hidden=resolved["hidden"],
        q=resolved["q"], lr_d=resolved["lr_d"], lr_g=resolved["lr_g"],
        inner_epochs=resolved["inner_epochs"], outer_epochs=resolved["epochs"],
        sigma=resolved["sigma"], epsilon=resolved["epsilon"],
        seed=resolved["seed"], eval_every=resolved["eval_every"],
        sample_pool=resolved["sample_pool"], laplacian=resolved["laplacian"],
        optimizer=resolved["optimizer"],
    )
    res = train_angcn(g, cfg)
    save_angcn(out / "checkpoint.json", res.generator, res.discriminator,
               res.noise_spec, q=cfg.q, seed=cfg.seed)
    write_trace(out / "trace.jsonl", res.trace)
    _write_json(out / "metrics.json", {"best": res.best})
    _write_manifest(out, "defend", resolved)
    print(f"best generated-position accuracy {res.best['acc_G']:.4f} "
          f"at epoch {res.best['epoch']}")
    return 0


# ---------------------------------------------------------------------------
# infer


def _read_features_file(path):
    """Native graph JSON, reading nothing but counts, features and labels."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        n = int(doc["n_nodes"])
        d = int(doc["d"])
        feats = np.array(doc["features"], dtype=np.float64).reshape(n, d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: not a native graph file ({exc})") from None
    labels = doc.get("labels")
    return feats, None if labels is None else np.array(labels, dtype=np.int64)


def cmd_infer(args) -> int:
    out = _out_dir(args)
    resolved = _resolve(args, {"indices": "all", "seed": 0})
    resolved.update({"checkpoint": args.checkpoint, "features": args.features})
    gen, disc, nspec, _meta = load_angcn(args.checkpoint)
    features, labels = _read_features_file(args.features)

    if resolved["indices"] == "all":
        idx = np.arange(features.shape[0])
    else:
        idx = np.array(_int_list(resolved["indices"]), dtype=np.int64)
    pred = infer_anonymous(gen, disc, nspec, features, idx,
                           seed=resolved["seed"])

    _write_json(out / "labels.json", {"indices": [int(i) for i in idx],
                                      "labels": [int(c) for c in pred]})
    _write_manifest(out, "infer", resolved)
    if labels is not None:
        acc = float(np.mean(pred == labels[idx]))
        print(f"accuracy vs stored labels {acc:.4f} over {len(idx)} nodes")
    else:
        print(f"labeled {len(idx)} nodes")
    return 0


# ---------------------------------------------------------------------------
# experiment


_EXPERIMENT_DEFAULTS = {
    "graph": None,
    "count": 200,
    "max_epochs": 64,
    "target": None,
    "c_v": 14,
    "deltas": None,
    "train_epochs": 100,
    "tau": None,
    "orders": "1,2,3",
    "laplacian": "combinatorial",
    "seed": 0,
}


def _experiment_signal(resolved, out: Path) -> None:
    rng = substream(resolved["seed"], "signal-selftest")
    worst = 0.0
    for i in range(resolved["count"]):
        e = int(rng.integers(1, resolved["max_epochs"] + 1))
        values = rng.normal(size=e)
        back = reconstruct(dft(NodeTrajectory(node=int(i), values=values)))
        scale = max(float(np.max(np.abs(values))), 1e-300)
        worst = max(worst, float(np.max(np.abs(back.values - values))) / scale)
    _write_json(out / "signal_report.json", {
        "count": resolved["count"], "max_epochs": resolved["max_epochs"],
        "max_residual": worst,
    })
    verdict = "yes" if worst < 1e-9 else "NO"
    print(f"round-trip max residual {worst:.3e} (< 1e-9: {verdict})")


def _experiment_perturb_u(resolved, out: Path) -> None:
    if resolved["graph"] is None:
        raise ValueError("perturb-u needs --graph")
    g = load_graph(resolved["graph"])
    if g.labels is None:
        raise ValueError("perturb-u trains a spectral filter: labeled graph required")
    kind = resolved["laplacian"]
    basis = eigendecompose(build_laplacian(g, kind=kind), kind=kind)
    model = init_spectral_model(basis, g.n_features, g.n_classes,
                                seed=resolved["seed"])
    train_model(model, g, epochs=resolved["train_epochs"])
    v = resolved["target"]
    v = most_connected_nodes(g, 1)[0] if v is None else int(v)
    deltas = (default_delta_sweep() if resolved["deltas"] is None
              else _float_list(resolved["deltas"]))
    rows = perturb_u_experiment(basis, model.filter_diag, g.features,
                                v, resolved["c_v"], deltas)
    write_deviation_csv(rows, out / "deviation.csv")
    print(f"wrote {len(rows)} deviation rows for node {v} "
          f"({len(deltas)} delta values)")


def _experiment_delete_node(resolved, out: Path) -> None:
    if resolved["graph"] is None:
        raise ValueError("delete-node needs --graph")
    g = load_graph(resolved["graph"])
    tau = resolved["tau"]
    tau = most_connected_nodes(g, 1)[0] if tau is None else int(tau)
    orders = _int_list(resolved["orders"])
    by_order = delete_node_experiment(g, tau, orders)
    write_change_csv(by_order, out / "change.csv")
    means = {str(o): (float(np.mean(np.abs(list(by_order[o].values()))))
                      if by_order[o] else None)
             for o in orders}
    _write_json(out / "experiment_report.json",
                {"tau": tau, "orders": orders, "mean_abs_change": means})
    shown = ", ".join(f"{o}: {v:.4f}" if v is not None else f"{o}: none"
                      for o, v in means.items())
    print(f"mean |C| by neighbor order -> {shown}")


def cmd_experiment(args) -> int:
    out = _out_dir(args)
    resolved = _resolve(args, _EXPERIMENT_DEFAULTS)
    resolved["kind"] = args.kind
    if args.kind == "signal":
        _experiment_signal(resolved, out)
    elif args.kind == "perturb-u":
        _experiment_perturb_u(resolved, out)
    elif args.kind == "delete-node":
        _experiment_delete_node(resolved, out)
    else:
        raise ValueError(f"unknown experiment kind {args.kind!r}")
    _write_manifest(out, "experiment", resolved)
    return 0


# ---------------------------------------------------------------------------
# report


_REPORT_FIELDS = ("clean_acc", "attacked_acc", "angcn_acc", "attack_success")


def _run_row(run_dir: Path):
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        return None
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    row = {"run": run_dir.name, "command": manifest.get("command", "?")}

    metrics_path = run_dir / "metrics.json"
    metrics = {}
    if metrics_path.exists():
        with open(metrics_path, "r", encoding="utf-8") as fh:
            metrics = json.load(fh)
    if row["command"] == "train" and "test_acc" in metrics:
        row["clean_acc"] = metrics["test_acc"]
    if row["command"] == "attack":
        row["clean_acc"] = metrics.get("clean_acc")
        row["attacked_acc"] = metrics.get("attacked_acc")
        row["attack_success"] = metrics.get("success_rate")
    if row["command"] == "defend" and "best" in metrics:
        row["angcn_acc"] = metrics["best"].get("acc_G")
    return row


def cmd_report(args) -> int:
    out = _out_dir(args)
    rows = []
    warnings = []
    for name in args.runs:
        run_dir = Path(name)
        row = _run_row(run_dir)
        if row is None:
            warnings.append(f"{name}: no manifest.json")
            print(f"warning: {name}: no manifest.json", file=sys.stderr)
        else:
            rows.append(row)

    _write_json(out / "report.json", {"runs": rows, "warnings": warnings})

    cols = ["run", "command"] + [f for f in _REPORT_FIELDS
                                 if any(r.get(f) is not None for r in rows)]
    lines = ["| " + " | ".join(cols) + " |",
             "| " + " | ".join("---" for _ in cols) + " |"]
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append("" if v is None else
                         (f"{v:.4f}" if isinstance(v, float) else str(v)))
        lines.append("| " + " | ".join(cells) + " |")
    with open(out / "report.md", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p) -> None:
    p.add_argument("--out-dir", default=None,
                   help="output directory (default: $EDGEWARD_OUT_DIR or .)")
    p.add_argument("--config", default=None,
                   help="JSON file supplying defaults; flags win")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgeward",
        description="Edge-perturbation attacks, anonymous-position defense, "
                    "and localization experiments for graph classifiers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert raw or synthetic inputs to the native format")
    p.add_argument("--cora", nargs=2, metavar=("CONTENT", "CITES"))
    p.add_argument("--synth", metavar="SPEC",
                   help="ring:N | barbell:K | sbm:BxS:p_in:p_out:seed[:noise]")
    p.add_argument("-o", "--graph-out", default=None)
    p.add_argument("--split", default=None,
                   help="citation split sizes as train,val,test")
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("train", help="fit a spectral or semi GCN")
    p.add_argument("graph")
    p.add_argument("--model", choices=("spectral", "semi"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--optimizer", default=None)
    p.add_argument("--laplacian", choices=_LAPLACIANS, default=None)
    p.add_argument("--propagation", choices=_PROPAGATIONS, default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("attack", help="run the edge-perturbing attack")
    p.add_argument("graph")
    p.add_argument("checkpoint")
    p.add_argument("--targets", required=True, help="comma-separated node ids")
    p.add_argument("--desired", required=True, help="comma-separated class ids")
    p.add_argument("--mode", choices=("single", "multi"), default=None)
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--reg-weight", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--optimizer", default=None)
    p.add_argument("--stop-when-successful", action="store_const", const=True,
                   default=None)
    p.add_argument("--binarize-in-loop", action="store_const", const=True,
                   default=None)
    p.add_argument("--freeze-check", action="store_const", const=True,
                   default=None, help="verify target rows survived untouched")
    _add_common(p)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("defend", help="adversarially train the anonymous classifier")
    p.add_argument("graph")
    p.add_argument("--epochs", type=int, default=None, help="outer epochs")
    p.add_argument("--inner-epochs", type=int, default=None)
    p.add_argument("--lr-d", type=float, default=None)
    p.add_argument("--lr-g", type=float, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--noise-width", type=int, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--optimizer", default=None)
    p.add_argument("--sample-pool", choices=("labeled", "train"), default=None)
    p.add_argument("--laplacian", choices=_LAPLACIANS, default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_defend)

    # infer deliberately has no way to name an edge list
    p = sub.add_parser("infer", help="classify nodes from generated positions only")
    p.add_argument("checkpoint")
    p.add_argument("features", help="native graph JSON; only features are read")
    p.add_argument("--indices", default=None, help="'all' or comma-separated ids")
    _add_common(p)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("experiment", help="localization and signal-model studies")
    p.add_argument("kind", choices=("signal", "perturb-u", "delete-node"))
    p.add_argument("--graph", default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--target", type=int, default=None)
    p.add_argument("--c-v", type=int, default=None)
    p.add_argument("--deltas", default=None, help="comma-separated scale factors")
    p.add_argument("--train-epochs", type=int, default=None)
    p.add_argument("--tau", type=int, default=None)
    p.add_argument("--orders", default=None, help="comma-separated neighbor orders")
    p.add_argument("--laplacian", choices=_LAPLACIANS, default=None)
    _add_common(p)
    p.set_defaults(fn=cmd_experiment)

    p = sub.add_parser("report", help="consolidate metrics across run directories")
    p.add_argument("runs", nargs="+")
    _add_common(p)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:       # argparse printed its own diagnostic
        code = exc.code
        return code if isinstance(code, int) else 2

    try:
        return args.fn(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:        # noqa: BLE001 - boundary of the process
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
