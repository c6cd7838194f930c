"""Command-line entry point.

Subcommands: gen, ingest, train, tune, eval, auth, simulate, bench. Every
command is reproducible byte for byte given the same flags and inputs; the
seed comes from --seed, falling back to the DPAN_SEED environment variable,
then 0. Provenance records (seeds, input hashes, tool version) never contain
timestamps or absolute paths, so reruns emit identical artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, authd, imgen, ingest, pipeline, simulate
from .classifiers import ClassifierKind
from .features import ALLOWED_WIDTH_SCALES
from .kernels import BACKEND
from .pipeline import TrainedAuthenticator, TrainOptions


class UsageError(ValueError):
    """Bad flag combinations; exits with status 2 like argparse does."""


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(command: str, seed: int | None, inputs: dict[str, str], **extra) -> dict:
    record = {
        "tool": "dpan",
        "version": __version__,
        "command": command,
        "seed": seed,
        "inputs": {name: _sha256(p) for name, p in inputs.items()},
    }
    record.update(extra)
    return record


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("DPAN_SEED")
    return int(env) if env else 0


def _parse_conditions(text: str) -> list[simulate.EnvCondition]:
    if text == "all":
        return list(simulate.DEFAULT_CONDITIONS)
    conditions = []
    for part in text.split(","):
        try:
            temp, volt = part.split(":")
            conditions.append(simulate.EnvCondition(float(temp), float(volt)))
        except ValueError as exc:
            raise ValueError(
                f"bad condition {part!r}; expected TEMP:VOLTAGE like 20:1.50"
            ) from exc
    return conditions


def _info(args, msg: str) -> None:
    if args.verbose:
        print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(args) -> int:
    seed = _resolve_seed(args)
    if args.devices < 2:
        raise UsageError("need at least 2 devices for group authentication")
    conditions = _parse_conditions(args.conditions)
    labels = args.labels.split(",") if args.labels else None
    out = Path(args.out)
    manifest = simulate.generate_dataset(
        out,
        m=args.devices,
        conditions=conditions,
        repeats=args.repeats,
        seed=seed,
        labels=labels,
        export_hex=args.export_hex,
    )
    prov = _provenance(
        "gen",
        seed,
        {"manifest": out / "manifest.json"},
        devices=args.devices,
        repeats=args.repeats,
        conditions=args.conditions,
        export_hex=args.export_hex,
    )
    (out / "provenance.json").write_text(json.dumps(prov, sort_keys=True, indent=2) + "\n")
    print(f"wrote {len(manifest.records)} images under {out}")
    return 0


def cmd_ingest(args) -> int:
    out = Path(args.out)
    manifest = ingest.ingest_dataset(args.in_dir, args.layout, out)
    prov = _provenance(
        "ingest",
        None,
        {"manifest": out / "manifest.json"},
        layout=args.layout,
        files=len(manifest.records),
    )
    (out / "provenance.json").write_text(json.dumps(prov, sort_keys=True, indent=2) + "\n")
    print(f"ingested {len(manifest.records)} measurements into {out}")
    return 0


def cmd_train(args) -> int:
    seed = _resolve_seed(args)
    manifest = simulate.DatasetManifest.load(args.manifest)
    options = TrainOptions(
        width_scale=args.width_scale,
        weight_path=args.weights,
        test_fraction=args.test_fraction,
        search_budget=None if args.no_search else args.search_budget,
        adversary_count=args.adversaries,
    )
    _info(args, f"training {args.classifier} model (backend: {BACKEND})")
    model = pipeline.train_dpan(manifest, ClassifierKind(args.classifier), options, seed=seed)
    model.save(args.out)
    tuning = model.provenance.get("tuning")
    summary = {
        "model": Path(args.out).name,
        "kind": model.kind.value,
        "labels": model.labels,
        "threshold": model.threshold,
        "cv_mean_accuracy": model.provenance.get("cv_mean_accuracy"),
        "tuning": tuning,
    }
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def cmd_tune(args) -> int:
    model = TrainedAuthenticator.load(args.model)
    manifest = simulate.DatasetManifest.load(args.manifest)
    seeds = model.provenance.get("sub_seeds", {})
    opts = model.provenance.get("options", {})
    ds = pipeline.split(
        manifest,
        opts.get("test_fraction", 0.2),
        seeds.get("split", 0),
        k=opts.get("cv_folds", 5),
    )
    labels = [manifest.records[i].device_id for i in ds.train_indices]
    _, val_pos = pipeline.make_stratified_split(
        labels, opts.get("val_fraction", 0.25), seeds.get("val", 0)
    )
    val_records = [manifest.records[ds.train_indices[i]] for i in val_pos]
    val_phen = [manifest.load_phenotype(r) for r in val_records]
    adv_seed = args.adversary_seed if args.adversary_seed is not None else seeds.get("adversary", 0)
    adversaries = pipeline.gen_adversary(args.adversaries, adv_seed)
    result = pipeline.tune_threshold(
        model, val_phen, [r.device_id for r in val_records], adversaries
    )
    model.threshold = result.threshold
    model.provenance["tuning"] = {
        "threshold": result.threshold,
        "fn_rate": result.tuning_fn_rate,
        "max_adversary_confidence": result.max_adversary_confidence,
        "n_misclassified": result.n_misclassified,
        "clamped": result.clamped,
    }
    model.save(args.out)
    print(json.dumps(model.provenance["tuning"], sort_keys=True, indent=2))
    return 0


def cmd_eval(args) -> int:
    seed = _resolve_seed(args)
    model = TrainedAuthenticator.load(args.model)
    manifest = simulate.DatasetManifest.load(args.manifest)
    seeds = model.provenance.get("sub_seeds", {})
    opts = model.provenance.get("options", {})
    ds = pipeline.split(
        manifest,
        opts.get("test_fraction", 0.2),
        seeds.get("split", 0),
        k=opts.get("cv_folds", 5),
    )
    test_records = [manifest.records[i] for i in ds.test_indices]
    phenotypes = [manifest.load_phenotype(r) for r in test_records]
    labels = [r.device_id for r in test_records]
    adv_seed = args.adversary_seed if args.adversary_seed is not None else seed + 1
    adversaries = pipeline.gen_adversary(args.adversaries, adv_seed) if args.adversaries else None
    _info(args, f"evaluating on {len(phenotypes)} held-out images")
    report = pipeline.evaluate(model, phenotypes, labels, adversaries)
    print(report.format_table())
    if args.out:
        payload = report.to_dict()
        payload["provenance"] = _provenance(
            "eval",
            seed,
            {"model": args.model, "manifest": args.manifest},
            adversaries=args.adversaries,
            adversary_seed=adv_seed,
        )
        Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_auth(args) -> int:
    model = TrainedAuthenticator.load(args.model)
    phenotype = imgen.read_pgm(args.image)
    uid_list = args.uid_list.split(",") if args.uid_list else list(model.labels)
    group = authd.GroupConfig(uid_list=uid_list)
    decision = authd.authenticate(model, group, authd.AuthRequest(args.uid, phenotype))
    payload = {
        "uid": args.uid,
        "accepted": decision.accepted,
        "reason": decision.reason.value if decision.reason else None,
        "confidence": decision.confidence,
        "threshold": model.threshold,
        "provenance": _provenance(
            "auth", None, {"model": args.model, "image": args.image}
        ),
    }
    print(json.dumps(payload, sort_keys=True, indent=2))
    return 0 if decision.accepted else 1


def cmd_simulate(args) -> int:
    group, model_path = authd.load_scenario(args.scenario)
    model_file = Path(args.scenario).parent / model_path
    model = TrainedAuthenticator.load(model_file)
    log = authd.simulate_group(model, group)
    authd.write_event_log(args.out, log)
    prov = _provenance(
        "simulate",
        group.seed,
        {"scenario": args.scenario, "model": model_file, "log": args.out},
        events=len(log),
    )
    Path(str(args.out) + ".provenance.json").write_text(
        json.dumps(prov, sort_keys=True, indent=2) + "\n"
    )
    accepted = sum(1 for r in log if r["accepted"])
    print(f"{len(log)} events, {accepted} accepted -> {args.out}")
    return 0


def cmd_bench(args) -> int:
    if args.iters < 1:
        raise UsageError("--iters must be at least 1")
    model = TrainedAuthenticator.load(args.model)
    phenotype = imgen.read_pgm(args.image)
    times = []
    for _ in range(args.iters):
        t0 = time.perf_counter()
        pred = model.predict(phenotype)
        _ = pred.confidence is not None and model.threshold is not None and \
            pred.confidence >= model.threshold
        times.append(time.perf_counter() - t0)
    report = {
        "backend": BACKEND,
        "width_scale": model.weights.width_scale,
        "kind": model.kind.value,
        "iters": args.iters,
        "mean_s": float(np.mean(times)),
        "min_s": float(min(times)),
        "max_s": float(max(times)),
        "provenance": _provenance(
            "bench", None, {"model": args.model, "image": args.image}, iters=args.iters
        ),
    }
    print(json.dumps(report, sort_keys=True, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpan",
        description="Group-based device authentication from DRAM-PUF phenotype images",
    )
    parser.add_argument("--version", action="version", version=f"dpan {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed (default: DPAN_SEED env var, then 0)")
    common.add_argument("--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--devices", type=int, default=5)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--conditions", default="all",
                   help="comma list of TEMP:VOLTAGE pairs, or 'all' (8 conditions)")
    p.add_argument("--labels", default=None, help="comma list of device labels")
    p.add_argument("--export-hex", action="store_true",
                   help="also write raw DWORD hex dumps")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ingest", parents=[common], help="convert real hex dumps to a dataset")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--layout", required=True,
                   help="path template, e.g. '{device}/{pattern}_{temp}_{voltage}_{repeat}.txt'")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", parents=[common], help="enroll: train and tune a group model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--classifier", default="lr", choices=[k.value for k in ClassifierKind])
    p.add_argument("--width-scale", type=float, default=0.125, choices=ALLOWED_WIDTH_SCALES)
    p.add_argument("--weights", default=None, help="import extractor weights from a container")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--search-budget", type=int, default=8)
    p.add_argument("--no-search", action="store_true", help="skip hyperparameter search")
    p.add_argument("--adversaries", type=int, default=100,
                   help="tuning adversary count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", parents=[common], help="retune the confidence threshold")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--adversaries", type=int, default=100)
    p.add_argument("--adversary-seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", parents=[common], help="report held-out metrics")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--adversaries", type=int, default=100)
    p.add_argument("--adversary-seed", type=int, default=None)
    p.add_argument("--out", default=None, help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("auth", parents=[common], help="authenticate one phenotype image")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--uid", required=True)
    p.add_argument("--uid-list", default=None, help="comma list; defaults to model labels")
    p.set_defaults(func=cmd_auth)

    p = sub.add_parser("simulate", parents=[common], help="run a scripted group scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="event log (JSON lines)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], help="time full authentication passes")
    p.add_argument("--model", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
