"""Command-line front end: attack generation, transfer evaluation, oracle suites.

Exit codes: 0 success, 1 oracle failure, 2 validation error, 3 numerical failure.
Setting FOA_LOG_DIR redirects metrics CSVs and oracle replay dumps.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .attack import AttackConfig, run_progressive
from .errors import FoaError, NumericalError, ValidationError
from .evaluate import evaluate_pairs, format_report, write_report_csv
from .fileio import read_encoder, read_ppm, write_metrics_csv, write_ppm, write_tensor
from .oracles import SUITES, run_suite


def _log_dir(default_dir):
    env = os.environ.get("FOA_LOG_DIR")
    if env:
        path = Path(env)
        path.mkdir(parents=True, exist_ok=True)
        return path
    return Path(default_dir)


def _parse_clusters(text):
    try:
        return tuple(int(c) for c in text.split(","))
    except ValueError:
        raise ValidationError(f"bad cluster schedule {text!r}; expected e.g. '3,5'")


def _add_attack_parser(sub):
    p = sub.add_parser("attack", help="generate an adversarial image")
    p.add_argument("--nat", required=True, help="natural image (PPM)")
    p.add_argument("--tar", required=True, help="target image (PPM)")
    p.add_argument("--encoders", required=True,
                   help="comma-separated encoder weight files (FOAE)")
    p.add_argument("--out", required=True, help="output adversarial image (PPM)")
    p.add_argument("--epsilon", type=float, default=16 / 255)
    p.add_argument("--step-size", type=float, default=1 / 255)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--eta", type=float, default=0.2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--w-init", type=float, default=1.0)
    p.add_argument("--clusters", default="3,5", help="cluster schedule, e.g. 3,5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--crop-min", type=float, default=0.5)
    p.add_argument("--crop-max", type=float, default=1.0)
    p.add_argument("--fail-threshold", type=float, default=0.1)


def _add_eval_parser(sub):
    p = sub.add_parser("eval", help="held-out-encoder transfer report")
    p.add_argument("--adv-dir", required=True)
    p.add_argument("--tar-dir", required=True)
    p.add_argument("--nat-dir", default=None,
                   help="optional natural images for clean-baseline cosines")
    p.add_argument("--heldout-encoder", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", default=None, help="report CSV path")


def _add_oracle_parser(sub):
    p = sub.add_parser("oracle", help="run verification oracle suites")
    p.add_argument("--suite", choices=sorted(SUITES) + ["all"], default="all")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)


def cmd_attack(args):
    nat = read_ppm(args.nat)
    tar = read_ppm(args.tar)
    encoders = [read_encoder(p.strip()) for p in args.encoders.split(",")]
    cfg = AttackConfig(epsilon=args.epsilon, step_size=args.step_size,
                       iterations=args.iters, eta=args.eta, lam=args.lam,
                       temperature=args.temperature, w_init=args.w_init,
                       cluster_schedule=_parse_clusters(args.clusters),
                       crop_scale_min=args.crop_min, crop_scale_max=args.crop_max,
                       seed=args.seed, fail_threshold=args.fail_threshold)
    result = run_progressive(nat, tar, encoders, cfg)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ppm(out, result.adv_image)
    write_tensor(out.with_suffix(".delta.foat"), result.delta)
    metrics_path = _log_dir(out.parent) / (out.stem + ".metrics.csv")
    write_metrics_csv(metrics_path, result.loss_trace)

    mean_loss = float(result.final_losses.mean()) if result.final_losses.size else 0.0
    print(f"wrote {out} (clusters={result.clusters_used}, "
          f"mean final loss {mean_loss:.4f}, "
          f"max|delta|={float(np.abs(result.delta).max()):.6f})")
    print(f"metrics: {metrics_path}")
    return 0


def _pair_files(adv_dir, tar_dir, nat_dir):
    from .errors import MissingPairError

    adv_dir, tar_dir = Path(adv_dir), Path(tar_dir)
    triples = []
    adv_files = sorted(p for p in adv_dir.iterdir() if p.suffix == ".ppm")
    if not adv_files:
        raise ValidationError(f"no .ppm files in {adv_dir}")
    for adv_path in adv_files:
        tar_path = tar_dir / adv_path.name
        if not tar_path.exists():
            raise MissingPairError(f"no target image for {adv_path.name} in {tar_dir}")
        nat = None
        if nat_dir is not None:
            nat_path = Path(nat_dir) / adv_path.name
            if not nat_path.exists():
                raise MissingPairError(f"no natural image for {adv_path.name} in {nat_dir}")
            nat = read_ppm(nat_path)
        triples.append((adv_path.stem, read_ppm(adv_path), read_ppm(tar_path), nat))
    return triples


def cmd_eval(args):
    spec = read_encoder(args.heldout_encoder)
    triples = _pair_files(args.adv_dir, args.tar_dir, args.nat_dir)
    report = evaluate_pairs(spec, triples, args.threshold)
    print(format_report(report))
    if args.out:
        write_report_csv(args.out, report)
        print(f"report CSV: {args.out}")
    return 0


def _dump_replay(check):
    payload = {}
    for key, value in (check.replay or {}).items():
        payload[key] = value.tolist() if isinstance(value, np.ndarray) else value
    name = check.name.replace("/", "_")
    path = _log_dir(".") / f"replay_{name}.json"
    with open(path, "w") as f:
        json.dump({"check": check.name, "detail": check.detail, "instance": payload}, f)
    return path


def cmd_oracle(args):
    if args.trials < 0:
        raise ValidationError("--trials must be >= 0")
    if args.trials == 0:
        print("no trials requested; nothing to check")
        return 0
    checks = run_suite(args.suite, args.trials, args.seed)
    failures = 0
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: {check.detail}")
        if not check.passed:
            failures += 1
            if check.replay is not None:
                print(f"     replay instance: {_dump_replay(check)}")
    print(f"{len(checks) - failures}/{len(checks)} oracle checks passed")
    return 0 if failures == 0 else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="foa",
        description="Feature-alignment adversarial attack engine and its verification oracles")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_attack_parser(sub)
    _add_eval_parser(sub)
    _add_oracle_parser(sub)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"attack": cmd_attack, "eval": cmd_eval, "oracle": cmd_oracle}
    try:
        return handlers[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, FoaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
