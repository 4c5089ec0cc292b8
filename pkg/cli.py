"""Command line for the look-around simulator"""
import argparse
import asyncio
import json
import sys
from dataclasses import replace
from pathlib import Path

from database.results_database import ResultsDatabase
from domain.constants import ABLATION_DEFAULTS, PERCEPTION_RAW, PERCEPTION_RECONCILED, POLICY_KINDS, SCORE_KINDS
from domain.errors import ConfigError, LookAroundError
from exploration.policies import LearnedPolicyParams, load_policy, save_policy
from harness.ablation import ablate, parse_axis_values
from harness.artifacts import read_episode, reconcile_episode, write_episode
from harness.config import RunConfig, configure_logging, load_run_config
from harness.episode import run_episode, train_policy
from harness.evaluation import detection_predictions, evaluate_map50, ground_truth_boxes
from harness.pipeline import head_predictions, holdout_set, run_holdout
from harness.report import load_fragments, report, write_ablation_table, write_report
from perception.reconciliation import dump_dataset, load_dataset
from training.finetune_head import (
    curve_to_csv,
    evaluate_head,
    hyper_for_mode,
    init_head,
    load_head,
    samples_from_dataset,
    samples_from_detections,
    save_head,
    train,
)
from world.scene import generate_scene
from world.scene_io import save_scene


def _config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config) if args.config else RunConfig()


def _seed(args: argparse.Namespace, config: RunConfig) -> int:
    return args.seed if args.seed is not None else config.seeds[0]


def cmd_generate_scene(args: argparse.Namespace) -> None:
    config = _config(args)
    scene = generate_scene(config.scene, _seed(args, config))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_scene(scene))
    print(out)


def cmd_explore(args: argparse.Namespace) -> None:
    config = _config(args).with_overrides(policy=args.policy, score=args.score, steps=args.steps, policy_params=args.params)
    seed = _seed(args, config)
    result = run_episode(config, seed)
    for path in write_episode(result, config, seed, args.out):
        print(path)


def cmd_reconcile(args: argparse.Namespace) -> None:
    dataset = reconcile_episode(args.episode, load_run_config(args.config) if args.config else None)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dump_dataset(dataset), encoding="utf-8")
    print(f"{out}: {len(dataset.labels())} pseudo-labels over {len(dataset.entries)} frames")


def cmd_finetune(args: argparse.Namespace) -> None:
    config = _config(args)
    if args.raw:
        if not args.episode:
            raise ConfigError("--raw trains on per-view detections and needs --episode")
        detections = [d for frame in read_episode(args.episode).frames for d in frame.detections]
        samples = samples_from_detections(detections)
        mode = PERCEPTION_RAW
    else:
        if not args.dataset:
            raise ConfigError("finetune needs --dataset (or --raw with --episode)")
        samples = samples_from_dataset(load_dataset(Path(args.dataset).read_text(encoding="utf-8")))
        mode = PERCEPTION_RECONCILED
    overrides = {k: v for k, v in (("alpha", args.alpha), ("margin", args.margin), ("epochs", args.epochs)) if v is not None}
    hyper = hyper_for_mode(replace(config.finetune, **overrides), mode)
    seed = _seed(args, config)
    initial = init_head(config.detector.n_classes, config.detector.feature_dim, hyper.projector_dim, seed)
    params, curve = train(initial, samples, hyper, seed=seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_head(params))
    curve_path = out.with_suffix(".curve.csv")
    curve_path.write_text(curve_to_csv(curve), encoding="utf-8")
    print(out)
    print(curve_path)


def cmd_evaluate(args: argparse.Namespace) -> None:
    config = _config(args)
    seed = _seed(args, config)
    params = load_head(Path(args.params).read_bytes())
    holdout = run_holdout(config, seed)
    summary = {"seed": seed, "n_detections": len(holdout.detections)}
    evaluation_set = holdout_set(holdout)
    if evaluation_set:
        summary["head_accuracy"] = evaluate_head(params, evaluation_set).accuracy
        gt = ground_truth_boxes(holdout.frames, holdout.scene)
        threshold = config.eval.iou_threshold
        summary["map50_raw"] = evaluate_map50(detection_predictions(holdout.detections), gt, threshold).map50
        summary["map50_finetuned"] = evaluate_map50(head_predictions(params, holdout.detections), gt, threshold).map50
    print(json.dumps(summary, sort_keys=True))


def cmd_train_policy(args: argparse.Namespace) -> None:
    config = _config(args)
    initial = load_policy(Path(args.params).read_bytes()) if args.params else LearnedPolicyParams()
    params, returns = train_policy(config, args.episodes, params=initial, batch_size=args.batch_size)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(save_policy(params))
    print(f"{out}: {len(returns)} episodes, last return {returns[-1] if returns else 0.0:.6f}")


def _run_ablation(config: RunConfig, axis: str, values: list | None, out: str) -> None:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ablate(config, axis, values, db_path=str(out_dir / "results.db"))
    for path in write_ablation_table(rows, out_dir):
        print(path)


def cmd_ablate(args: argparse.Namespace) -> None:
    values = parse_axis_values(args.axis, args.values) if args.values else None
    _run_ablation(_config(args), args.axis, values, args.out)


def cmd_ablate_scores(args: argparse.Namespace) -> None:
    _run_ablation(_config(args), "score_kind", list(SCORE_KINDS), args.out)


async def _db_fragments(db_path: str) -> list[dict]:
    db = ResultsDatabase(db_path)
    await db.init()
    try:
        rows = await db.get_fragments(status="ok")
    finally:
        await db.close()
    return [row["metrics"] for row in rows]


def cmd_report(args: argparse.Namespace) -> None:
    fragments = load_fragments(args.fragments) if args.fragments else asyncio.run(_db_fragments(args.db))
    for path in write_report(report(fragments), args.out):
        print(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lookaround", description=__doc__)
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (overrides LOOKAROUND_LOG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-scene", help="generate and save a scene")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_scene)

    p = sub.add_parser("explore", help="run one exploration episode and write its artifacts")
    p.add_argument("--config")
    p.add_argument("--policy", choices=POLICY_KINDS)
    p.add_argument("--score", choices=SCORE_KINDS)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--params", help="learned policy parameters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("reconcile", help="write the pseudo-label dataset of a saved episode")
    p.add_argument("--episode", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconcile)

    p = sub.add_parser("finetune", help="train the detection head")
    p.add_argument("--config")
    p.add_argument("--dataset")
    p.add_argument("--episode", help="episode directory, used with --raw")
    p.add_argument("--alpha", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--raw", action="store_true", help="self-train on per-view detector outputs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="holdout evaluation of a trained head")
    p.add_argument("--config")
    p.add_argument("--params", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("train-policy", help="REINFORCE training of the learned goal policy")
    p.add_argument("--config")
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--params", help="initial parameters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_policy)

    p = sub.add_parser("ablate", help="ablation table over one axis")
    p.add_argument("--config")
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_DEFAULTS))
    p.add_argument("--values", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("ablate-scores", help="ablation over the four disagreement scores")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate_scores)

    p = sub.add_parser("report", help="aggregate metric fragments")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--fragments", nargs="+")
    source.add_argument("--db")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        args.func(args)
    except LookAroundError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
