"""Command-line entry point.

Subcommands: synth, demos, train <bc|bcmdn|gan|gail|airgail>, eval, export.
Exit codes: 0 success, 1 usage error (synopsis on stderr), 2 runtime error.
Every artifact-producing run writes a `<out>.manifest` with the full resolved
configuration, the seed and SHA-256 hashes of every written file, so a run is
reproducible from its manifest alone. Flags mirror config field names;
`--config FILE` (key=value lines) and repeatable `--set key=value` provide
overrides with precedence flag > config file > default. The seed falls back
to the DRIVECLONE_SEED environment variable when no --seed is given.
"""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
from dataclasses import fields as dataclass_fields
from pathlib import Path

from . import adversarial, data, evaluation, sim
from . import bc as bc_mod

SEED_ENV = "DRIVECLONE_SEED"


class UsageError(Exception):
    def __init__(self, message, parser=None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message, self)


def build_parser() -> _Parser:
    parser = _Parser(prog="driveclone",
                     description="Highway imitation-learning workbench")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="write a synthetic recording", parents=[])
    p.add_argument("--vehicles", type=int, required=True)
    p.add_argument("--lanes", type=int, default=3)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--lane-change-rate", type=float, default=0.15)
    p.add_argument("--track-id", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("demos", help="extract expert demonstrations")
    p.add_argument("--tracks", required=True, help="track CSV file or directory")
    p.add_argument("--per-track", type=int, default=0,
                   help="expert vehicles sampled per track (0 = all)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a control policy")
    p.add_argument("algo", choices=["bc", "bcmdn", "gan", "gail", "airgail"])
    p.add_argument("--demos", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="key=value override file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="hyperparameter override (repeatable)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--M", type=int, default=5, help="mixture components (bcmdn)")
    p.add_argument("--steps", type=int, default=None, help="GAN steps")
    p.add_argument("--tracks", default=None, help="env recordings (gail/airgail)")
    p.add_argument("--budget", type=int, default=100_000,
                   help="env-step budget (gail/airgail)")
    p.add_argument("--workers", type=int, default=None,
                   help="rollout worker seed streams (gail/airgail)")
    p.add_argument("--penalty", type=float, default=None, help="collision penalty (airgail)")

    p = sub.add_parser("eval", help="evaluate a policy checkpoint")
    p.add_argument("--policy", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--insertions", type=int, default=30)
    p.add_argument("--max-steps", type=int, default=None)
    p.add_argument("--name", default=None, help="policy name in the tables")
    p.add_argument("--export-trajectories", default=None, metavar="DIR")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("export", help="merge eval outputs into one table")
    p.add_argument("--inputs", nargs="+", required=True,
                   help="directories produced by `driveclone eval`")
    p.add_argument("--out", required=True)

    return parser


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _require_seed(ns) -> int:
    if ns.seed is not None:
        return ns.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"{SEED_ENV}={env!r} is not an integer") from None
    raise UsageError(f"--seed is required (or set {SEED_ENV})")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(out_path: Path, command: str, config: dict, artifacts) -> Path:
    lines = [f"command={command}"]
    for key in sorted(config):
        lines.append(f"{key}={config[key]}")
    for p in artifacts:
        p = Path(p)
        lines.append(f"artifact.{p.name}={p.name}")
        lines.append(f"sha256.{p.name}={_sha256(p)}")
    manifest = Path(str(out_path) + ".manifest")
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return manifest


def apply_overrides(cfg, config_file, sets, flags: dict):
    """Apply key=value pairs onto a dataclass config: flag > file > default."""
    valid = {f.name: f for f in dataclass_fields(cfg)}

    def coerce(name, raw):
        f = valid.get(name)
        if f is None:
            raise UsageError(f"unknown config key {name!r} for {type(cfg).__name__}")
        current = getattr(cfg, name)
        if isinstance(current, bool):
            return raw.lower() in ("1", "true", "yes") if isinstance(raw, str) else bool(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(v) for v in str(raw).split(",") if v)
        return raw

    pairs = []
    if config_file:
        for line in Path(config_file).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"malformed config line {line!r}")
            pairs.append((key.strip(), value.strip()))
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"malformed --set {item!r}")
        pairs.append((key.strip(), value.strip()))
    for key, value in pairs:
        setattr(cfg, key, coerce(key, value))
    for key, value in flags.items():
        if value is not None:
            setattr(cfg, key, coerce(key, value))
    return cfg


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(ns) -> int:
    seed = _require_seed(ns)
    cfg = data.SynthConfig(
        n_vehicles=ns.vehicles, n_lanes=ns.lanes, duration_s=ns.duration,
        seed=seed, lane_change_rate=ns.lane_change_rate, track_id=ns.track_id,
    )
    rec = data.synth_traffic(cfg)
    report = data.validate_recording(rec)
    if not report.ok:
        raise RuntimeError("synthetic recording failed validation:\n" + report.text())
    csv_path, meta_path = data.write_recording(rec, ns.out)
    config = {"vehicles": ns.vehicles, "lanes": ns.lanes, "duration": ns.duration,
              "lane_change_rate": ns.lane_change_rate, "track_id": ns.track_id,
              "seed": seed, "out": ns.out}
    write_manifest(csv_path, "synth", config, [csv_path, meta_path])
    print(f"wrote {csv_path} ({len(rec.frames)} rows, {rec.n_lanes} lanes)")
    return 0


def cmd_demos(ns) -> int:
    seed = ns.seed if ns.seed is not None else int(os.environ.get(SEED_ENV, "0"))
    recordings = data.read_recordings(ns.tracks)
    demos = []
    import numpy as np
    rng = np.random.default_rng(seed)
    for rec in recordings:
        ids = rec.vehicle_ids()
        if ns.per_track and ns.per_track < len(ids):
            ids = sorted(rng.choice(ids, size=ns.per_track, replace=False).tolist())
        demos.extend(data.extract_all_demonstrations(rec, vehicle_ids=ids))
    if not demos:
        raise RuntimeError("no demonstrations extracted")
    out = data.save_demonstrations(demos, ns.out)
    config = {"tracks": ns.tracks, "per_track": ns.per_track, "seed": seed,
              "out": ns.out, "n_demos": len(demos)}
    write_manifest(out, "demos", config, [out])
    print(f"wrote {out} ({len(demos)} demonstrations)")
    return 0


def _train_outputs(ns, policy_path, extra_paths, config) -> int:
    write_manifest(Path(ns.out), f"train {ns.algo}", config, [policy_path, *extra_paths])
    print(f"wrote {policy_path}")
    return 0


def cmd_train(ns) -> int:
    seed = _require_seed(ns)
    demos = data.load_demonstrations(ns.demos)
    out = Path(ns.out)
    report_path = out.with_name(out.stem + "_report.csv")

    if ns.algo in ("bc", "bcmdn"):
        cfg = bc_mod.BcConfig(seed=seed)
        apply_overrides(cfg, ns.config, ns.set,
                        {"epochs": ns.epochs, "batch": ns.batch, "lr": ns.lr})
        if ns.algo == "bc":
            policy, report = bc_mod.train_bc(demos, cfg)
        else:
            policy, report = bc_mod.train_bc_mdn(demos, cfg, n_components=ns.M)
        bc_mod.save_policy(policy, out)
        report.save(report_path)
        config = {"algo": ns.algo, "demos": ns.demos, "seed": seed, "M": ns.M,
                  **{k: v for k, v in report.hyper.items()}}
        return _train_outputs(ns, out, [report_path], config)

    if ns.algo == "gan":
        cfg = adversarial.GanConfig(seed=seed)
        apply_overrides(cfg, ns.config, ns.set,
                        {"steps": ns.steps, "minibatch": ns.batch})
        gen, disc, report = adversarial.gan_train(demos, cfg)
        adversarial.save_generator(gen, out)
        disc_path = out.with_name(out.stem + "_disc" + out.suffix)
        adversarial.save_discriminator(disc, disc_path)
        report.save(report_path)
        config = {"algo": "gan", "demos": ns.demos, "seed": seed,
                  **{k: v for k, v in report.hyper.items()}}
        return _train_outputs(ns, out, [disc_path, report_path], config)

    # gail / airgail
    if not ns.tracks:
        raise UsageError("train gail/airgail needs --tracks for the replay environment")
    recordings = data.read_recordings(ns.tracks)
    hyper = adversarial.PpoHyper()
    apply_overrides(hyper, ns.config, ns.set,
                    {"minibatch": ns.batch, "workers": ns.workers})
    penalty_cfg = adversarial.PenaltyConfig()
    if ns.penalty is not None:
        penalty_cfg.penalty = ns.penalty

    def env_factory():
        return sim.ReplayEnv(recordings, max_episode_steps=hyper.max_episode_steps)

    if ns.algo == "gail":
        policy, disc, report = adversarial.gail_train(
            env_factory, demos, hyper, ns.budget, seed)
    else:
        policy, disc, report = adversarial.air_gail_train(
            env_factory, demos, hyper, ns.budget, seed, penalty_cfg)
    bc_mod.save_policy(policy, out)
    disc_path = out.with_name(out.stem + "_disc" + out.suffix)
    adversarial.save_discriminator(disc, disc_path)
    report.save(report_path)
    config = {"algo": ns.algo, "demos": ns.demos, "tracks": ns.tracks,
              "budget": ns.budget, "seed": seed,
              **{k: v for k, v in report.hyper.items()}}
    return _train_outputs(ns, out, [disc_path, report_path], config)


def cmd_eval(ns) -> int:
    seed = _require_seed(ns)
    policy = evaluation.load_actor(ns.policy)
    recordings = data.read_recordings(ns.tracks)
    cfg = evaluation.EvalConfig(insertions_per_track=ns.insertions,
                                max_steps=ns.max_steps, seed=seed)
    row, profiles = evaluation.run_evaluation(policy, recordings, cfg, name=ns.name)
    out_dir = Path(ns.out)
    comparison, profile_path = evaluation.export_table([row], profiles, out_dir)
    config = {"policy": ns.policy, "tracks": ns.tracks, "seed": seed,
              "insertions": ns.insertions, "max_steps": ns.max_steps,
              "name": row.policy}
    write_manifest(out_dir / "eval", "eval", config, [comparison, profile_path])
    print(f"wrote {comparison} and {profile_path}")
    return 0


def cmd_export(ns) -> int:
    rows = []
    profile_lists = []
    for d in ns.inputs:
        d = Path(d)
        rows.extend(evaluation.read_comparison(d / "comparison.csv"))
        profile_lists.append(evaluation.read_track_profiles(d / "track_profiles.csv"))
    profiles = evaluation.merge_profiles(profile_lists)
    out_dir = Path(ns.out)
    comparison, profile_path = evaluation.export_table(rows, profiles, out_dir)
    config = {"inputs": ";".join(str(p) for p in ns.inputs), "out": ns.out}
    write_manifest(out_dir / "export", "export", config, [comparison, profile_path])
    print(f"wrote {comparison} and {profile_path}")
    return 0


_HANDLERS = {
    "synth": cmd_synth,
    "demos": cmd_demos,
    "train": cmd_train,
    "eval": cmd_eval,
    "export": cmd_export,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError("a subcommand is required", parser)
        handler = _HANDLERS[ns.command]
        try:
            return handler(ns)
        except UsageError:
            raise
        except Exception as exc:  # runtime failure -> exit 2
            print(f"driveclone: error: {exc}", file=sys.stderr)
            return 2
    except UsageError as exc:
        target = exc.parser or parser
        print(target.format_usage(), file=sys.stderr, end="")
        print(f"driveclone: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
