#!/usr/bin/env python
"""
dfms Command Line Interface

One entry point for the whole workflow: build a synthetic proxy corpus, train and
serve a victim, run the attack, evaluate clones and run ablation sweeps.
"""

import argparse
import json
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from loguru import logger
from pydantic import BaseModel, Field, ValidationError
from torch.utils.data import TensorDataset

from dfms import __version__
from dfms.analysis.metrics import (
    QueryBoundParams,
    agreement,
    class_histogram,
    clone_accuracy,
    emit_curves,
    per_class_accuracy,
    query_bound,
    write_csv,
)
from dfms.analysis.visualizer import RunVisualizer
from dfms.attack.checkpoint import LATEST
from dfms.attack.config import AttackConfig, build_config, config_keys, flatten_config, load_config, save_config
from dfms.attack.history import TrainingHistory
from dfms.attack.loop import PHASES, AttackResult, run_attack
from dfms.core.config import settings
from dfms.core.errors import ConfigError, DFMSError
from dfms.core.logger import setup_logging
from dfms.data import load_labeled, load_proxy
from dfms.nets.builder import load_network, save_network
from dfms.nets.zoo import CLASSIFIER_PLANS, classifier_spec
from dfms.synth.corpus import CorpusVariant, build_corpus, parse_mix
from dfms.synth.shapes import preset
from dfms.victim.client import RemoteVictim
from dfms.victim.ledger import QueryLedger
from dfms.victim.oracle import VictimEndpoint, VictimOracle
from dfms.victim.server import serve
from dfms.victim.storage import load_victim, save_victim
from dfms.victim.training import VictimTrainConfig, train_victim

MANIFEST_JSON = "manifest.json"
CONFIG_TXT = "config.txt"
LEDGER_LOG = "ledger.log"

# sweep kind -> AttackConfig key it varies
SWEEP_KEYS = {
    "lambda": "lambda_div",
    "gap": "iteration_gap_G",
    "arch": "nets.clone_arch",
    "disc": "discriminator_enabled",
    "proxy": "data.proxy",
}
SWEEP_DEFAULTS = {
    "lambda": "100,200,300,500,700,1000",
    "gap": "0,1,2,5",
    "arch": ",".join(CLASSIFIER_PLANS),
    "disc": "true,false",
}


class RunManifest(BaseModel):
    """Everything needed to replay a run."""

    command: List[str]
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    versions: Dict[str, str] = Field(default_factory=dict)
    started_at: str
    finished_at: Optional[str] = None
    status: str = "running"
    outputs: Dict[str, str] = Field(default_factory=dict)
    ledger: Optional[Dict[str, Any]] = None

    def write(self, run_dir: Path, filename: str = MANIFEST_JSON) -> Path:
        path = Path(run_dir) / filename
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _versions() -> Dict[str, str]:
    return {
        "dfms": __version__,
        "torch": torch.__version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }


def _run_dir(out: Optional[str], prefix: str) -> Path:
    if out:
        return Path(out)
    return settings.OUTPUT_ROOT / f"{prefix}_{datetime.now().strftime('%Y%m%d_%H%M%S')}"


def _split_values(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


# ---- synth / victim -------------------------------------------------------


def _start_manifest(config: Dict[str, Any], seed: int) -> RunManifest:
    return RunManifest(
        command=list(sys.argv),
        config=config,
        seeds={"seed": seed},
        versions=_versions(),
        started_at=_now(),
    )


def _finish_manifest(manifest: RunManifest, outputs: Dict[str, str]) -> None:
    manifest.outputs.update(outputs)
    manifest.status = "completed"
    manifest.finished_at = _now()


def run_synth_command(args) -> int:
    mix = parse_mix(args.mix)
    try:
        variants = [CorpusVariant(name, preset(name, greyscale=args.grey), fraction) for name, fraction in mix.items()]
    except ValueError as e:
        raise ConfigError(str(e), field="mix") from e
    out_dir = Path(args.out)
    run = _start_manifest({"total": args.total, "mix": dict(mix), "greyscale": args.grey}, args.seed)
    manifest = build_corpus(variants, args.total, args.seed, out_dir, workers=args.workers)
    _finish_manifest(run, {"corpus": str(out_dir), "checksum": manifest.checksum})
    run.write(out_dir)
    print(f"{manifest.count} images written to {args.out} (checksum {manifest.checksum})")
    return 0


def run_victim_train_command(args) -> int:
    dataset = load_labeled(args.dataset, train=True, channels=args.channels, image_size=args.image_size)
    test_set = None
    if args.test:
        test_set = load_labeled(args.test, train=False, channels=args.channels, image_size=args.image_size)
    num_classes = args.num_classes or int(dataset.tensors[1].max()) + 1
    spec = classifier_spec(args.arch, args.channels, num_classes, args.image_size, role="victim")
    hyper = VictimTrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed)
    run = _start_manifest(
        {"dataset": args.dataset, "arch": args.arch, "target": args.target, **hyper.model_dump()}, args.seed
    )
    victim = train_victim(
        dataset, spec, hyper, target_accuracy=args.target, test_set=test_set, device=settings.torch_device()
    )
    out = Path(args.out)
    save_victim(out, victim)
    _finish_manifest(run, {"victim": str(out), "accuracy": f"{victim.training_accuracy:.4f}"})
    if victim.flags:
        run.outputs["flags"] = ",".join(victim.flags)
    run.write(out.parent, filename=f"{out.stem}.{MANIFEST_JSON}")
    flags = f" [{', '.join(victim.flags)}]" if victim.flags else ""
    print(f"Victim accuracy {victim.training_accuracy:.4f}{flags} -> {args.out}")
    return 0


def open_served_ledger(budget: Optional[int], log_path: Optional[Path]) -> QueryLedger:
    """Ledger for a served victim; an existing log is replayed so totals survive restarts."""
    if log_path is None:
        return QueryLedger(budget=budget)
    ledger = QueryLedger.load(log_path, budget=budget)
    if budget is not None and ledger.used > budget:
        raise ConfigError(f"ledger log {log_path} already records {ledger.used} queries", field="budget")
    return ledger


def run_victim_serve_command(args) -> int:
    model = load_victim(Path(args.victim))
    ledger = open_served_ledger(args.budget, Path(args.ledger_log) if args.ledger_log else None)
    if ledger.used:
        logger.info(f"Resuming served victim at {ledger.used} queries used")
    serve(VictimOracle(model, ledger), host=args.host, port=args.port)
    return 0


def run_victim_stats_command(args) -> int:
    client = RemoteVictim(args.url)
    try:
        print(json.dumps(client.stats(), indent=2))
    finally:
        client.close()
    return 0


# ---- attack ---------------------------------------------------------------


def _config_overrides(args) -> Dict[str, Any]:
    return {key: getattr(args, f"set:{key}") for key in config_keys() if getattr(args, f"set:{key}", None) is not None}


def _resolve_config(args) -> Tuple[AttackConfig, List[str]]:
    if args.config:
        base, defaulted = load_config(Path(args.config))
    else:
        base, defaulted = AttackConfig(), config_keys()
    overrides = _config_overrides(args)
    config = build_config(overrides, base=base) if overrides else base
    return config, [key for key in defaulted if key not in overrides]


def _open_victim(config: AttackConfig, run_dir: Path) -> VictimEndpoint:
    if config.data.victim_url:
        return RemoteVictim(config.data.victim_url)
    if not config.data.victim:
        raise ConfigError("set a victim checkpoint or a victim URL", field="data.victim")
    model = load_victim(Path(config.data.victim))
    budget = config.data.budget or config.total_budget or None
    return VictimOracle(model, QueryLedger(budget=budget, log_path=run_dir / LEDGER_LOG), device=settings.torch_device())


def _load_attack_inputs(config: AttackConfig) -> Tuple[torch.Tensor, Optional[TensorDataset]]:
    if not config.data.proxy:
        raise ConfigError("a proxy corpus is required", field="data.proxy")
    nets = config.nets
    proxy = load_proxy(config.data.proxy, channels=nets.channels, image_size=nets.image_size)
    test_set = None
    if config.data.test:
        test_set = load_labeled(config.data.test, train=False, channels=nets.channels, image_size=nets.image_size)
    return proxy, test_set


def execute_attack(
    config: AttackConfig,
    run_dir: Path,
    command: Sequence[str],
    resume: Optional[Path] = None,
    stop_after: Optional[str] = None,
) -> AttackResult:
    """Run one attack into ``run_dir`` and leave a manifest, config, CSVs and networks behind."""
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        command=list(command),
        config=flatten_config(config),
        seeds={"seed": config.seed},
        versions=_versions(),
        started_at=_now(),
    )
    manifest.outputs["config"] = str(save_config(config, run_dir / CONFIG_TXT))
    manifest.write(run_dir)

    victim = _open_victim(config, run_dir)
    try:
        proxy, test_set = _load_attack_inputs(config)
        result = run_attack(
            config,
            victim,
            proxy,
            test_set=test_set,
            run_dir=run_dir,
            resume=resume,
            device=settings.torch_device(),
            stop_after=stop_after,
        )
    except DFMSError:
        manifest.status = "failed"
        manifest.finished_at = _now()
        manifest.ledger = victim.ledger_snapshot().model_dump()
        manifest.write(run_dir)
        raise
    finally:
        if isinstance(victim, RemoteVictim):
            victim.close()

    save_network(run_dir / "clone.pt", result.clone)
    save_network(run_dir / "generator.pt", result.generator)
    manifest.outputs.update({"clone": str(run_dir / "clone.pt"), "generator": str(run_dir / "generator.pt")})
    manifest.outputs.update({name: str(path) for name, path in emit_curves(result.history, run_dir).items()})
    manifest.outputs["checkpoint"] = str(run_dir / LATEST)
    manifest.ledger = result.ledger.model_dump()
    manifest.status = "completed" if len(result.completed_phases) == len(PHASES) else "partial"
    manifest.finished_at = _now()
    manifest.write(run_dir)
    logger.info(f"Run finished: {manifest.status}, {result.ledger.used} queries, outputs in {run_dir}")
    return result


def run_attack_command(args) -> int:
    config, defaulted = _resolve_config(args)
    if defaulted:
        logger.info(f"{len(defaulted)} settings left at their defaults: {', '.join(defaulted)}")
    run_dir = _run_dir(args.out, "attack")
    result = execute_attack(
        config,
        run_dir,
        sys.argv,
        resume=Path(args.resume) if args.resume else None,
        stop_after=args.stop_after,
    )
    accuracy = result.history.final_accuracy()
    print(f"Queries used: {result.ledger.used}")
    print(f"Phase breakdown: {result.ledger.phase_breakdown}")
    if accuracy is not None:
        print(f"Final clone accuracy: {accuracy:.4f}")
    return 0


# ---- eval -----------------------------------------------------------------


def _load_classifier(path: str, is_victim: bool):
    return load_victim(Path(path)).network if is_victim else load_network(Path(path))


def run_eval_command(args) -> int:
    if args.eval_command == "bound":
        value = query_bound(QueryBoundParams(q=args.q, delta=args.delta, rho=args.rho))
        print(f"{value:.6f}")
        return 0

    if args.eval_command == "curves":
        history = TrainingHistory.read_csv(Path(args.history))
        outputs = emit_curves(history, Path(args.out), render_plots=not args.no_plots)
        for name, path in outputs.items():
            print(f"{name}: {path}")
        return 0

    if args.eval_command == "accuracy":
        model = _load_classifier(args.model, args.victim_file)
        channels, size = model.spec.input_shape[0], model.spec.input_shape[1]
        test_set = load_labeled(args.dataset, train=False, channels=channels, image_size=size)
        print(f"Accuracy: {clone_accuracy(model, test_set):.4f}")
        if args.per_class:
            print(per_class_accuracy(model, test_set).to_string(index=False))
        return 0

    if args.eval_command == "agreement":
        clone = load_network(Path(args.clone))
        victim = load_victim(Path(args.victim))
        channels, size = victim.input_shape[0], victim.input_shape[1]
        probe = load_proxy(args.probe, channels=channels, image_size=size)
        print(f"Agreement: {agreement(clone, victim, probe):.4f}")
        return 0

    # hist
    generator = load_network(Path(args.generator))
    if args.victim_file:
        # metered like any other victim query
        labeler = VictimOracle(load_victim(Path(args.labeler)))
    else:
        labeler = load_network(Path(args.labeler))
    hist = class_histogram(generator, labeler, args.n, torch.Generator().manual_seed(args.seed))
    frame = pd.DataFrame({"class": range(len(hist.counts)), "count": hist.counts})
    out_dir = Path(args.out)
    write_csv(frame, out_dir / "hist.csv")
    try:
        RunVisualizer(out_dir).create_class_histogram(frame)
    except Exception as e:
        logger.error(f"Error rendering histogram: {e}")
    print(f"Normalized entropy: {hist.normalized_entropy:.4f} ({hist.source}, n={hist.n})")
    if isinstance(labeler, VictimOracle):
        print(f"Victim queries charged: {labeler.queries_used}")
    return 0


# ---- sweeps ---------------------------------------------------------------


def run_sweep_command(args) -> int:
    """Serial same-seed runs varying one setting; writes ``sweep.csv`` with one row per value."""
    config, _ = _resolve_config(args)
    if not config.data.test:
        raise ConfigError("sweeps compare clone accuracy and need a test set", field="data.test")
    key = SWEEP_KEYS[args.sweep_command]
    if args.sweep_command == "gap" and args.which == "C":
        key = "iteration_gap_C"
    raw_values = args.values or SWEEP_DEFAULTS.get(args.sweep_command)
    if not raw_values:
        raise ConfigError("--values is required for this sweep", field="values")

    sweep_dir = _run_dir(args.out, f"sweep_{args.sweep_command}")
    rows = []
    for i, value in enumerate(_split_values(raw_values)):
        run_config = build_config({key: value}, base=config)
        label = Path(value).name if args.sweep_command == "proxy" else value
        logger.info(f"Sweep {args.sweep_command}: run {i} with {key} = {value}")
        result = execute_attack(run_config, sweep_dir / f"{i:02d}_{label}", sys.argv)
        last_hist = result.history.last_histogram()
        entropy = next(
            (r.hist_entropy for r in reversed(result.history.records) if r.hist_entropy is not None), None
        )
        rows.append(
            {
                key.split(".")[-1]: value,
                "accuracy": result.history.final_accuracy(),
                "hist_entropy": entropy,
                "queries_used": result.ledger.used,
                "hist_classes": len(last_hist) if last_hist else 0,
            }
        )

    sweep = pd.DataFrame(rows)
    write_csv(sweep, sweep_dir / "sweep.csv")
    try:
        RunVisualizer(sweep_dir).create_sweep_chart(sweep)
    except Exception as e:
        logger.error(f"Error rendering sweep chart: {e}")
    print(sweep.to_string(index=False))
    return 0


# ---- parser ---------------------------------------------------------------


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", "-c", help="Run config file (key = value)")
    parser.add_argument("--out", "-o", help="Run directory (default: under DFMS_OUTPUT_ROOT)")
    group = parser.add_argument_group("config overrides")
    for key in config_keys():
        group.add_argument(f"--{key}", dest=f"set:{key}", metavar="VALUE", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dfms",
        description="Data-free model stealing with hard-label or soft-label victims",
    )
    parser.add_argument("--version", action="version", version=f"dfms {__version__}")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    # synth-make
    synth_parser = subparsers.add_parser("synth-make", help="Render a synthetic shape corpus")
    synth_parser.add_argument("--total", "-n", type=int, required=True, help="Number of images")
    synth_parser.add_argument(
        "--mix",
        default="large=0.5,small=0.5",
        help="Preset fractions, e.g. large=0.5,small=0.5 (presets: large, small, textured)",
    )
    color = synth_parser.add_mutually_exclusive_group()
    color.add_argument("--grey", dest="grey", action="store_true", default=True, help="Greyscale images (default)")
    color.add_argument("--color", dest="grey", action="store_false", help="Color images")
    synth_parser.add_argument("--seed", type=int, default=0, help="Corpus seed")
    synth_parser.add_argument("--workers", type=int, default=settings.NUM_WORKERS, help="Rendering processes")
    synth_parser.add_argument("--out", "-o", required=True, help="Corpus directory")

    # victim-train
    train_parser = subparsers.add_parser("victim-train", help="Train a victim classifier")
    train_parser.add_argument("--dataset", "-d", default="cifar10", help="Labeled source (cifar10, folder:DIR, ...)")
    train_parser.add_argument("--test", help="Held-out labeled source (default: split from --dataset)")
    train_parser.add_argument("--arch", "-a", choices=sorted(CLASSIFIER_PLANS), default="cnn4", help="Architecture")
    train_parser.add_argument("--channels", type=int, default=3)
    train_parser.add_argument("--image-size", type=int, default=32)
    train_parser.add_argument("--num-classes", type=int, help="K (default: inferred from labels)")
    train_parser.add_argument("--target", type=float, default=0.95, help="Target held-out accuracy")
    train_parser.add_argument("--epochs", type=int, default=30)
    train_parser.add_argument("--batch-size", type=int, default=128)
    train_parser.add_argument("--lr", type=float, default=0.1)
    train_parser.add_argument("--seed", type=int, default=0)
    train_parser.add_argument("--out", "-o", required=True, help="Victim checkpoint path")

    # victim-serve
    serve_parser = subparsers.add_parser("victim-serve", help="Serve a victim over HTTP with a query budget")
    serve_parser.add_argument("--victim", required=True, help="Victim checkpoint path")
    serve_parser.add_argument("--budget", "-b", type=int, help="Query budget (default: unlimited)")
    serve_parser.add_argument("--host", default=settings.SERVER_HOST)
    serve_parser.add_argument("--port", "-p", type=int, default=settings.SERVER_PORT)
    serve_parser.add_argument("--ledger-log", help="Append-only ledger log file")

    # victim-stats
    stats_parser = subparsers.add_parser("victim-stats", help="Show a served victim's ledger")
    stats_parser.add_argument(
        "--url", default=f"http://{settings.SERVER_HOST}:{settings.SERVER_PORT}", help="Victim server URL"
    )

    # attack
    attack_parser = subparsers.add_parser("attack", help="Attack commands")
    attack_subparsers = attack_parser.add_subparsers(dest="attack_command", help="Attack command to run")
    run_parser = attack_subparsers.add_parser("run", help="Run or resume an attack")
    _add_config_flags(run_parser)
    run_parser.add_argument("--resume", "-r", help="Checkpoint to resume from")
    run_parser.add_argument("--stop-after", choices=PHASES, help="Stop once this phase is done")

    # eval
    eval_parser = subparsers.add_parser("eval", help="Evaluation commands")
    eval_subparsers = eval_parser.add_subparsers(dest="eval_command", help="Evaluation to run")

    acc_parser = eval_subparsers.add_parser("accuracy", help="Clone accuracy on a labeled test set")
    acc_parser.add_argument("--model", "-m", required=True, help="Network file (clone.pt)")
    acc_parser.add_argument("--victim-file", action="store_true", help="--model is a victim checkpoint")
    acc_parser.add_argument("--dataset", "-d", default="cifar10", help="Labeled test source")
    acc_parser.add_argument("--per-class", action="store_true", help="Also print per-class accuracy")

    agree_parser = eval_subparsers.add_parser("agreement", help="Top-1 agreement of clone and victim")
    agree_parser.add_argument("--clone", required=True, help="Clone network file")
    agree_parser.add_argument("--victim", required=True, help="Victim checkpoint")
    agree_parser.add_argument("--probe", required=True, help="Probe images (corpus dir or dataset source)")

    hist_parser = eval_subparsers.add_parser("hist", help="Class histogram of generated samples")
    hist_parser.add_argument("--generator", "-g", required=True, help="Generator network file")
    hist_parser.add_argument("--labeler", "-l", required=True, help="Clone network file or victim checkpoint")
    hist_parser.add_argument("--victim-file", action="store_true", help="--labeler is a victim checkpoint")
    hist_parser.add_argument("--n", type=int, default=1000, help="Number of samples")
    hist_parser.add_argument("--seed", type=int, default=0)
    hist_parser.add_argument("--out", "-o", default=".", help="Output directory for hist.csv")

    bound_parser = eval_subparsers.add_parser("bound", help="Noisy-label active-learning query bound")
    bound_parser.add_argument("--q", type=float, required=True, help="Base query complexity")
    bound_parser.add_argument("--delta", type=float, required=True, help="Confidence parameter")
    bound_parser.add_argument("--rho", type=float, default=0.0, help="Label-corruption bound (< 0.5)")

    curves_parser = eval_subparsers.add_parser("curves", help="Accuracy curve and histogram from a history CSV")
    curves_parser.add_argument("--history", required=True, help="history.csv of a run")
    curves_parser.add_argument("--out", "-o", required=True, help="Output directory")
    curves_parser.add_argument("--no-plots", action="store_true", help="Write CSVs only")

    # sweep
    sweep_parser = subparsers.add_parser("sweep", help="Same-seed ablation sweeps")
    sweep_subparsers = sweep_parser.add_subparsers(dest="sweep_command", help="Setting to sweep")
    for kind, help_text in (
        ("lambda", "Diversity loss coefficient"),
        ("gap", "Iteration gap of generator or clone"),
        ("arch", "Clone architecture"),
        ("disc", "Discriminator updates on/off"),
        ("proxy", "Proxy corpus (e.g. grey vs color)"),
    ):
        kind_parser = sweep_subparsers.add_parser(kind, help=help_text)
        _add_config_flags(kind_parser)
        kind_parser.add_argument("--values", help=f"Comma-separated values (default: {SWEEP_DEFAULTS.get(kind, 'none')})")
        if kind == "gap":
            kind_parser.add_argument("--which", choices=["G", "C"], default="G", help="Model whose gap is swept")

    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv`` and run the command.

    Returns:
        0 on success, 1 on a dfms error, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging("DEBUG" if args.verbose else None)

    if not args.command:
        parser.print_help()
        return 2

    handlers = {
        "synth-make": run_synth_command,
        "victim-train": run_victim_train_command,
        "victim-serve": run_victim_serve_command,
        "victim-stats": run_victim_stats_command,
        "attack": run_attack_command,
        "eval": run_eval_command,
        "sweep": run_sweep_command,
    }
    sub = {"attack": "attack_command", "eval": "eval_command", "sweep": "sweep_command"}.get(args.command)
    if sub and not getattr(args, sub):
        logger.error(f"'{args.command}' needs a subcommand, see: dfms {args.command} --help")
        return 2

    logger.debug(f"Starting dfms CLI v{__version__}: {args.command}")
    try:
        return handlers[args.command](args)
    except DFMSError as e:
        logger.error(str(e))
        return 1
    except ValidationError as e:
        first = e.errors()[0]
        logger.error(f"{'.'.join(str(p) for p in first['loc'])}: {first['msg']}")
        return 1
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
