"""Batch command-line front end.

One JSON config drives every subcommand; --set key=value overrides individual
fields (dotted paths, values parsed as JSON when possible). Each run writes its
resolved config to <out>/run.json so results are reproducible from the record.

Exit codes: 0 success, 1 domain infeasibility, 2 I/O or format problem,
3 numeric divergence, 64 usage.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

from . import data as D
from . import evaluation as E
from . import synthesis as S
from .errors import (
    CheckpointError,
    DataFormatError,
    InfeasibilityError,
    NumericError,
    PairingError,
    SchemaError,
    SigweaveError,
    StratificationError,
)
from .losses import LossWeights
from .mci import enumerate_quads, plan_unseen_references
from .model import ModelConfig, even_partition, load_model
from .training import TrainConfig, train, save_train_state, TrainState
from .model import init_model

COMMANDS = ("toygen", "select", "train", "synth", "augment", "denoise", "eval", "probe")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_NUMERIC = 3
EXIT_USAGE = 64

DEFAULT_CONFIG = {
    "out": "run",
    "seed": 0,
    "data": {
        "path": None,
        "schema": {"attributes": [{"name": "attr1", "size": 3}, {"name": "attr2", "size": 3}]},
        "H": 16,
        "W": 16,
        "per_scenario": 10,
        "noise_amp": 0.05,
        "train_fraction": 0.8,
        "unseen": [],
    },
    "model": {
        "d": 100,
        "widths": [32, 64, 128, 256],
        "fc_hidden": 0,
        "partition": None,
        "checkpoint": None,
    },
    "train": {
        "iterations": 5000,
        "learning_rate": 1e-4,
        "adam_beta1": 0.9,
        "adam_beta2": 0.999,
        "alpha": 1.0,
        "beta": 1.0,
        "gamma": 0.2,
        "lambda": 0.1,
        "quads_per_step": 1,
        "log_every": 50,
        "checkpoint_every": 0,
    },
    "synth": {"target": None, "count": 8},
    "augment": {"scenario": None, "count": 8},
    "eval": {"candidates": None, "reference": None, "swap_attribute": None,
             "pairs": 64, "dump_dir": None},
    "probe": {"train": None, "test": None, "attribute": 0, "epochs": 200},
}


def _deep_update(base: dict, extra: dict) -> dict:
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _apply_override(cfg: dict, key: str, raw: str) -> None:
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        loaded = json.loads(Path(path).read_text())
        _deep_update(cfg, loaded)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        _apply_override(cfg, key.strip(), raw)
    return cfg


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(cfg: dict, command: str) -> None:
    out = _out_dir(cfg)
    record = {"command": command, "config": cfg}
    (out / "run.json").write_text(json.dumps(record, indent=1, sort_keys=True))


def _schema_from_cfg(cfg: dict) -> D.AttributeSchema:
    attrs = tuple((a["name"], a["size"]) for a in cfg["data"]["schema"]["attributes"])
    return D.AttributeSchema(attrs)


def _model_config(cfg: dict, H: int, W: int, P: int) -> ModelConfig:
    m = cfg["model"]
    d = int(m["d"])
    partition = tuple(m["partition"]) if m["partition"] else even_partition(P, d)
    return ModelConfig(
        H=H, W=W, d=d, partition=partition, widths=tuple(m["widths"]),
        fc_hidden=int(m["fc_hidden"]), seed=int(cfg["seed"]),
    )


def _train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    weights = LossWeights(alpha=float(t["alpha"]), beta=float(t["beta"]),
                          gamma=float(t["gamma"]), lam=float(t["lambda"]))
    return TrainConfig(
        weights=weights,
        learning_rate=float(t["learning_rate"]),
        adam_beta1=float(t["adam_beta1"]),
        adam_beta2=float(t["adam_beta2"]),
        iterations=int(t["iterations"]),
        quads_per_step=int(t["quads_per_step"]),
        seed=int(cfg["seed"]),
        checkpoint_every=int(t["checkpoint_every"]),
        log_every=int(t["log_every"]),
    )


# -- subcommands -----------------------------------------------------------------


def cmd_toygen(cfg: dict) -> int:
    out = _out_dir(cfg)
    dc = cfg["data"]
    schema = _schema_from_cfg(cfg)
    ds = D.generate_toy_dataset(
        schema, int(dc["H"]), int(dc["W"]), int(dc["per_scenario"]),
        float(dc["noise_amp"]), int(cfg["seed"]),
    )
    ds = D.split_dataset(ds, float(dc["train_fraction"]), int(cfg["seed"]))
    targets = [tuple(t) for t in dc["unseen"]]
    if targets:
        existing, held = D.hold_out_unseen(ds, targets)
        D.save_dataset(existing, out / "existing")
        held_ds = D.Dataset(
            schema=schema, samples=held,
            existing_scenarios={s.scenario for s in held},
            unseen_scenarios=set(), H=ds.H, W=ds.W,
        )
        D.save_dataset(held_ds, out / "heldout")
    else:
        D.save_dataset(ds, out / "existing")
    print(f"wrote {out / 'existing'}")
    return EXIT_OK


def cmd_select(cfg: dict) -> int:
    out = _out_dir(cfg)
    ds = D.load_dataset(cfg["data"]["path"])
    quads = enumerate_quads(ds.existing_scenarios, ds.schema)
    targets = [ds.schema.validate_scenario(t) for t in ds.unseen_scenarios]
    feasibility = []
    for tgt in sorted(targets):
        plans = plan_unseen_references(ds.existing_scenarios, tgt, ds.schema)
        feasibility.append({
            "target": list(tgt),
            "feasible": bool(plans),
            "plans": [
                {"partner": list(p.partner), "source": list(p.source),
                 "attribute": p.attribute, "expected": list(p.expected)}
                for p in plans
            ],
        })
    report = {
        "quad_count": len(quads),
        "quads": [[list(y) for y in q.members] for q in quads],
        "targets": feasibility,
    }
    (out / "selection.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    print(f"{len(quads)} quads; report at {out / 'selection.json'}")
    return EXIT_OK


def cmd_train(cfg: dict) -> int:
    out = _out_dir(cfg)
    ds = D.load_dataset(cfg["data"]["path"])
    quads = enumerate_quads(ds.existing_scenarios, ds.schema)
    tconf = _train_config(cfg)
    mconf = _model_config(cfg, ds.H, ds.W, ds.schema.P)
    resume = cfg["model"]["checkpoint"]
    if resume:
        from .training import load_train_state

        initial = load_train_state(resume)
    else:
        initial = TrainState.fresh(init_model(mconf))
    model, history = train(
        ds, quads, tconf, model_config=mconf, initial=initial,
        log_path=out / "losses.jsonl", checkpoint_dir=out / "checkpoints",
    )
    final = out / "model"
    save_train_state(initial, final)  # train() advances the state in place
    print(f"trained to step {model.iteration}; model at {final}")
    return EXIT_OK


def _load_model_for(cfg: dict):
    ckpt = cfg["model"]["checkpoint"]
    if not ckpt:
        raise DataFormatError("model.checkpoint must point at a trained checkpoint")
    return load_model(ckpt)


def _save_outputs(cfg: dict, ds: D.Dataset, samples: list[D.Sample], name: str) -> Path:
    out = _out_dir(cfg)
    target_dir = out / name
    synth_ds = D.Dataset(
        schema=ds.schema, samples=samples,
        existing_scenarios={s.scenario for s in samples},
        unseen_scenarios=set(), H=ds.H, W=ds.W,
    )
    D.save_dataset(synth_ds, target_dir)
    return target_dir


def cmd_synth(cfg: dict) -> int:
    ds = D.load_dataset(cfg["data"]["path"])
    model = _load_model_for(cfg)
    target = cfg["synth"]["target"]
    if target is None:
        raise ValueError("synth.target must name the unseen scenario")
    request = S.SynthesisRequest(target=tuple(target), count=int(cfg["synth"]["count"]),
                                 seed=int(cfg["seed"]))
    samples = S.synthesize_unseen(model, ds, request)
    path = _save_outputs(cfg, ds, samples, "synthetic")
    print(f"wrote {len(samples)} samples to {path}")
    return EXIT_OK


def cmd_augment(cfg: dict) -> int:
    ds = D.load_dataset(cfg["data"]["path"])
    model = _load_model_for(cfg)
    scenario = cfg["augment"]["scenario"]
    if scenario is None:
        raise ValueError("augment.scenario must name an existing scenario")
    samples = S.augment_seen(model, ds, tuple(scenario), int(cfg["augment"]["count"]),
                             seed=int(cfg["seed"]))
    path = _save_outputs(cfg, ds, samples, "augmented")
    print(f"wrote {len(samples)} samples to {path}")
    return EXIT_OK


def cmd_denoise(cfg: dict) -> int:
    ds = D.load_dataset(cfg["data"]["path"])
    model = _load_model_for(cfg)
    cleaned = [S.denoise(model, s) for s in ds.samples]
    path = _save_outputs(cfg, ds, cleaned, "denoised")
    print(f"wrote {len(cleaned)} samples to {path}")
    return EXIT_OK


def cmd_eval(cfg: dict) -> int:
    out = _out_dir(cfg)
    ec = cfg["eval"]
    report: dict = {}
    if ec["swap_attribute"] is not None:
        ds = D.load_dataset(cfg["data"]["path"])
        model = _load_model_for(cfg)
        k = int(ec["swap_attribute"])
        same = E.swap_test(model, ds, k, seed=int(cfg["seed"]), pairs=int(ec["pairs"]))
        diff = E.swap_test(model, ds, k, seed=int(cfg["seed"]) + 1, pairs=int(ec["pairs"]),
                           same_category=False)
        report["swap"] = {
            "attribute": k,
            "same_category": same.to_json(),
            "different_category": diff.to_json(),
            "p_value": E.permutation_pvalue(same.psnr_values, diff.psnr_values,
                                            seed=int(cfg["seed"])),
        }
    else:
        cand = D.load_dataset(ec["candidates"])
        ref = D.load_dataset(ec["reference"])
        ref_pool = ref.by_scenario()
        psnr_values, ssim_values, skipped = [], [], 0
        dump_dir = Path(ec["dump_dir"]) if ec["dump_dir"] else None
        if dump_dir:
            dump_dir.mkdir(parents=True, exist_ok=True)
        for s in cand.samples:
            refs = ref_pool.get(s.scenario, [])
            if not refs:
                skipped += 1
                continue
            best = max(refs, key=lambda r: E.psnr(s.signal, r.signal))
            psnr_values.append(E.psnr(s.signal, best.signal))
            ssim_values.append(E.ssim(s.signal, best.signal))
            if dump_dir:
                E.write_pgm(s.signal, dump_dir / f"{s.id}.pgm")
        if not psnr_values:
            raise InfeasibilityError("no candidate scenario has reference samples")
        metric = E.MetricReport.from_scores(psnr_values, ssim_values)
        report["comparison"] = metric.to_json() | {"skipped": skipped}
    (out / "eval.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    print(f"report at {out / 'eval.json'}")
    return EXIT_OK


def cmd_probe(cfg: dict) -> int:
    out = _out_dir(cfg)
    pc = cfg["probe"]
    train_ds = D.load_dataset(pc["train"])
    test_ds = D.load_dataset(pc["test"])
    report = E.probe_classify(
        train_ds, test_ds, int(pc["attribute"]), seed=int(cfg["seed"]),
        epochs=int(pc["epochs"]),
    )
    (out / "probe.json").write_text(json.dumps(report.to_json(), indent=1, sort_keys=True))
    print(f"accuracy {report.accuracy:.2f}%; report at {out / 'probe.json'}")
    return EXIT_OK


_DISPATCH = {
    "toygen": cmd_toygen,
    "select": cmd_select,
    "train": cmd_train,
    "synth": cmd_synth,
    "augment": cmd_augment,
    "denoise": cmd_denoise,
    "eval": cmd_eval,
    "probe": cmd_probe,
}


def run(command: str, cfg: dict) -> int:
    """Execute one subcommand against a resolved config dict."""
    if command not in _DISPATCH:
        print(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        _echo_config(cfg, command)
        return _DISPATCH[command](cfg)
    except (InfeasibilityError, StratificationError, PairingError, SchemaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (DataFormatError, CheckpointError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, SigweaveError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = argparse.ArgumentParser(prog="sigweave", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field (dotted path)")
    if argv and argv[0] not in COMMANDS and not argv[0].startswith("-"):
        print(f"unknown command {argv[0]!r}; choose from {', '.join(COMMANDS)}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config, args.set)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    return run(args.command, cfg)


if __name__ == "__main__":
    sys.exit(main())
