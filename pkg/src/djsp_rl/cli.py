"""Command-line entry point: reproducible experiments with persisted artifacts.

Every command resolves its full configuration (defaults < config file <
explicit flags), writes a manifest first, then produces result files. A
manifest can be re-executed with --from-manifest and must reproduce result
CSVs byte-identically (timestamps excluded, they live only in the manifest).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .agent import QNetwork, episode_seed_set, evaluate, train
from .config import (
    RNG_ALGORITHM,
    EnvConfig,
    NetConfig,
    PerturbConfig,
    TrainConfig,
    asdict_flat,
    parse_config_file,
)
from .env import JobShopEnv, run_rule_episode
from .gantt import write_gantt
from .graph import longest_path_makespan
from .instance import BUNDLED_INSTANCES, ParseError
from .rules import ALL_RULES, DispatchRule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_manifest(out_dir: Path, command: str, config: dict, seed: int,
                   outputs: list[str]) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "config": {k: v for k, v in sorted(config.items())},
        "master_seed": seed,
        "rng_algorithm": RNG_ALGORITHM,
        "code_version": __version__,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "outputs": outputs,
    }
    path = out_dir / "manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
    return path


def parse_bool(text: str) -> bool:
    if text.lower() in ("true", "1", "yes"):
        return True
    if text.lower() in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def parse_rules(text: str) -> list[DispatchRule]:
    if text.strip().lower() == "all":
        return list(ALL_RULES)
    out = []
    for name in text.split(","):
        try:
            out.append(DispatchRule[name.strip().upper()])
        except KeyError:
            raise argparse.ArgumentTypeError(f"unknown rule {name!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="djsp", description=__doc__)
    p.add_argument("--from-manifest", metavar="PATH",
                   help="re-run the command recorded in a manifest")
    p.add_argument("--out-dir", default=None, help="output directory")
    sub = p.add_subparsers(dest="command")

    def common(sp, k_default=8):
        sp.add_argument("--out-dir", default=None, help="output directory")
        sp.add_argument("--instance", default="ft06",
                        help=f"name or path ({', '.join(BUNDLED_INSTANCES)})")
        sp.add_argument("--k", "--schedule-cycle", dest="schedule_cycle", type=int,
                        default=k_default, help="cycles a chosen rule is held for")
        sp.add_argument("--random-rate", type=float, default=0.1)
        sp.add_argument("--shuffle", type=parse_bool, default=True)
        sp.add_argument("--perturb-per-episode", type=parse_bool, default=True)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", default=None,
                        help="flat key=value config file; flags override")

    def net_flags(sp):
        sp.add_argument("--d-feature", type=int, default=40)
        sp.add_argument("--n-heads", type=int, default=5)
        sp.add_argument("--n-layers", type=int, default=3)
        sp.add_argument("--d-ff", type=int, default=160)

    sp = sub.add_parser("train", help="train the rule-selecting agent")
    common(sp)
    net_flags(sp)
    sp.add_argument("--episodes", type=int, default=3000)
    sp.add_argument("--train-every", type=int, default=1)
    sp.add_argument("--buffer-size", type=int, default=100_000)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--step-size", type=float, default=3e-4)
    sp.add_argument("--target-update", type=int, default=100)
    sp.add_argument("--gamma", type=float, default=0.99)
    sp.add_argument("--per-alpha", type=float, default=0.6)
    sp.add_argument("--per-beta", type=float, default=0.4)
    sp.add_argument("--components", default="double,dueling,per,noisy",
                    help="enabled agent components (subset of double,dueling,per,noisy)")
    sp.add_argument("--out", default="checkpoint.json", help="checkpoint filename")

    sp = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--episodes", type=int, default=500)

    sp = sub.add_parser("compare", help="rule baselines over seeded episodes")
    common(sp)
    sp.add_argument("--instances", default="ft06",
                    help="comma-separated names, or 'all' for the bundled set")
    sp.add_argument("--rules", type=parse_rules, default=list(ALL_RULES))
    sp.add_argument("--episodes", type=int, default=500)

    sp = sub.add_parser("ablate", help="train/evaluate with a component subset")
    common(sp)
    net_flags(sp)
    sp.add_argument("--components", default="",
                    help="components to enable, e.g. double,per ('' = plain DQN)")
    sp.add_argument("--episodes", type=int, default=3000)
    sp.add_argument("--eval-episodes", type=int, default=500)
    sp.add_argument("--train-every", type=int, default=1)
    sp.add_argument("--buffer-size", type=int, default=100_000)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--step-size", type=float, default=3e-4)
    sp.add_argument("--target-update", type=int, default=100)
    sp.add_argument("--gamma", type=float, default=0.99)
    sp.add_argument("--per-alpha", type=float, default=0.6)
    sp.add_argument("--per-beta", type=float, default=0.4)

    sp = sub.add_parser("export-gantt", help="run one episode, emit SVG + JSON")
    common(sp)
    sp.add_argument("--rule", type=lambda s: DispatchRule[s.upper()], default=DispatchRule.MOR)
    sp.add_argument("--trace", action="store_true", help="also write per-cycle trace.csv")

    sp = sub.add_parser("export-graph", help="dump the disjunctive graph as JSON")
    common(sp)
    sp.add_argument("--rule", type=lambda s: DispatchRule[s.upper()], default=None,
                    help="run a full episode first so every disjunction is oriented")

    sp = sub.add_parser("attention-dump", help="dump attention weights at a step")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--step", type=int, default=0, help="decision index to dump at")
    return p


def apply_config_file(args, argv: list[str]) -> None:
    """Config-file values fill in everything not given explicitly on the CLI."""
    if getattr(args, "config", None) is None:
        return
    file_vals = parse_config_file(args.config)
    explicit = {a.split("=", 1)[0].lstrip("-").replace("-", "_")
                for a in argv if a.startswith("--")}
    if "k" in explicit:
        explicit.add("schedule_cycle")
    # evaluation-style commands read their episode count from test_episodes
    if args.command in ("evaluate", "compare") and "test_episodes" in file_vals:
        file_vals.setdefault("episodes", file_vals["test_episodes"])
    if args.command == "ablate" and "test_episodes" in file_vals:
        file_vals.setdefault("eval_episodes", file_vals["test_episodes"])
    for key, val in file_vals.items():
        if hasattr(args, key) and key not in explicit:
            setattr(args, key, val)


def env_config(args) -> EnvConfig:
    return EnvConfig(
        instance=args.instance, schedule_cycle=args.schedule_cycle,
        perturb=PerturbConfig(random_rate=args.random_rate, shuffle=args.shuffle,
                              seed=args.seed),
        perturb_per_episode=args.perturb_per_episode,
    )


def net_config(args) -> NetConfig:
    return NetConfig(d_feature=args.d_feature, n_heads=args.n_heads,
                     n_layers=args.n_layers, d_ff=args.d_ff)


def train_config(args, components: str) -> TrainConfig:
    comp = {c.strip() for c in components.split(",") if c.strip()}
    unknown = comp - {"double", "dueling", "per", "noisy"}
    if unknown:
        raise ValueError(f"unknown components: {sorted(unknown)}")
    return TrainConfig(
        episodes=args.episodes, buffer_size=args.buffer_size,
        step_size=args.step_size, batch_size=args.batch_size,
        target_update=args.target_update, gamma=args.gamma,
        per_alpha=args.per_alpha, per_beta=args.per_beta,
        train_every=args.train_every,
        double="double" in comp, dueling="dueling" in comp,
        per="per" in comp, noisy="noisy" in comp,
    )


def resolved_config(args, env_cfg, extra: dict) -> dict:
    doc = {"argv_command": args.command}
    doc.update(asdict_flat(env_cfg))
    doc.update(extra)
    return doc


# --- commands ---

def cmd_train(args, out_dir: Path) -> int:
    env_cfg = env_config(args)
    net_cfg = net_config(args)
    tr_cfg = train_config(args, args.components)
    config = resolved_config(args, env_cfg, {**asdict_flat(net_cfg), **asdict_flat(tr_cfg)})
    config["checkpoint"] = args.out
    write_manifest(out_dir, "train", config, args.seed,
                   [args.out, "training_log.csv"])

    def progress(ep, row):
        if ep % 50 == 0 or ep == tr_cfg.episodes - 1:
            print(f"episode {row[0]}: reward {row[1]:.3f} makespan {row[2]}",
                  file=sys.stderr)

    net, log = train(env_cfg, net_cfg, tr_cfg, args.seed, progress=progress)
    (out_dir / args.out).write_text(
        net.checkpoint_json(args.seed, __version__, {"instance": args.instance}))
    write_csv(out_dir / "training_log.csv",
              ["episode", "cumulative_reward", "makespan"], log)
    print(f"wrote {out_dir / args.out} and training_log.csv")
    return EXIT_OK


def cmd_evaluate(args, out_dir: Path) -> int:
    env_cfg = env_config(args)
    net, meta = QNetwork.from_checkpoint(Path(args.ckpt).read_text())
    config = resolved_config(args, env_cfg,
                             {"ckpt": str(args.ckpt), "episodes": args.episodes})
    write_manifest(out_dir, "evaluate", config, args.seed, ["eval.csv", "summary.json"])
    seeds = episode_seed_set(args.seed, args.episodes)
    res = evaluate(net, env_cfg, seeds)
    write_csv(out_dir / "eval.csv", ["episode", "seed", "makespan"],
              [(i, s, m) for i, (s, m) in enumerate(zip(seeds, res["makespans"]))])
    summary = {"mean": res["mean"], "min": res["min"], "std": res["std"],
               "episodes": args.episodes, "ckpt_meta": meta}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    print(f"mean makespan {res['mean']:.2f}, min {res['min']} over {args.episodes} episodes")
    return EXIT_OK


def cmd_compare(args, out_dir: Path) -> int:
    names = (list(BUNDLED_INSTANCES) if args.instances.strip().lower() == "all"
             else [s.strip() for s in args.instances.split(",") if s.strip()])
    rules = args.rules
    env_cfg0 = env_config(args)
    config = resolved_config(args, env_cfg0, {
        "instances": ",".join(names), "rules": ",".join(r.name for r in rules),
        "episodes": args.episodes,
    })
    write_manifest(out_dir, "compare", config, args.seed, ["compare.csv"])
    seeds = episode_seed_set(args.seed, args.episodes)
    header = ["instance"]
    for r in rules:
        header += [f"{r.name}_mean", f"{r.name}_min", f"{r.name}_std"]
    rows = []
    for name in names:
        env = JobShopEnv(EnvConfig(instance=name, schedule_cycle=args.schedule_cycle,
                                   perturb=env_cfg0.perturb,
                                   perturb_per_episode=args.perturb_per_episode),
                         compute_features=False)
        row: list = [name]
        for r in rules:
            ms = np.array([run_rule_episode(env, r, seed=s) for s in seeds])
            row += [float(ms.mean()), int(ms.min()), float(ms.std())]
        rows.append(tuple(row))
        print(name, " ".join(f"{r.name}={row[1 + 3 * i]:.1f}"
                             for i, r in enumerate(rules)), file=sys.stderr)
    write_csv(out_dir / "compare.csv", header, rows)
    print(f"wrote {out_dir / 'compare.csv'}")
    return EXIT_OK


def cmd_ablate(args, out_dir: Path) -> int:
    env_cfg = env_config(args)
    net_cfg = net_config(args)
    tr_cfg = train_config(args, args.components)
    config = resolved_config(args, env_cfg, {**asdict_flat(net_cfg), **asdict_flat(tr_cfg),
                                             "eval_episodes": args.eval_episodes})
    write_manifest(out_dir, "ablate", config, args.seed,
                   ["ablate.csv", "training_log.csv", "checkpoint.json"])
    net, log = train(env_cfg, net_cfg, tr_cfg, args.seed)
    (out_dir / "checkpoint.json").write_text(
        net.checkpoint_json(args.seed, __version__, {"instance": args.instance}))
    write_csv(out_dir / "training_log.csv",
              ["episode", "cumulative_reward", "makespan"], log)
    seeds = episode_seed_set(args.seed, args.eval_episodes)
    res = evaluate(net, env_cfg, seeds)
    comp_label = "+".join(c.strip() for c in args.components.split(",") if c.strip())
    write_csv(out_dir / "ablate.csv",
              ["instance", "components", "episodes", "mean_makespan", "min_makespan",
               "std_makespan"],
              [(args.instance, comp_label or "none", args.episodes,
                res["mean"], res["min"], res["std"])])
    print(f"components=[{args.components}] mean makespan {res['mean']:.2f}")
    return EXIT_OK


def cmd_export_gantt(args, out_dir: Path) -> int:
    env_cfg = env_config(args)
    config = resolved_config(args, env_cfg, {"rule": args.rule.name, "trace": args.trace})
    outputs = ["gantt.svg", "gantt.json"] + (["trace.csv"] if args.trace else [])
    write_manifest(out_dir, "export-gantt", config, args.seed, outputs)
    env = JobShopEnv(env_cfg, compute_features=False)
    env.trace_enabled = args.trace
    run_rule_episode(env, args.rule, seed=args.seed)
    write_gantt(env.sim, out_dir / "gantt.svg", out_dir / "gantt.json",
                title=f"{args.instance} under {args.rule.name}")
    if args.trace:
        write_csv(out_dir / "trace.csv", ["clock", "action", "idle_ratio"], env.trace)
    print(f"makespan {env.makespan()}; wrote gantt.svg / gantt.json")
    return EXIT_OK


def cmd_export_graph(args, out_dir: Path) -> int:
    env_cfg = env_config(args)
    config = resolved_config(args, env_cfg,
                             {"rule": args.rule.name if args.rule else ""})
    write_manifest(out_dir, "export-graph", config, args.seed, ["graph.json"])
    env = JobShopEnv(env_cfg, compute_features=False)
    if args.rule is not None:
        run_rule_episode(env, args.rule, seed=args.seed)
    else:
        env.reset(seed=args.seed)
    g = env.graph()
    doc = g.to_json()
    if args.rule is not None:
        doc["longest_path_makespan"] = longest_path_makespan(g)
        doc["simulator_makespan"] = env.makespan()
    (out_dir / "graph.json").write_text(json.dumps(doc))
    print(f"wrote graph.json ({len(doc['nodes'])} nodes)")
    return EXIT_OK


def cmd_attention_dump(args, out_dir: Path) -> int:
    env_cfg = env_config(args)
    net, meta = QNetwork.from_checkpoint(Path(args.ckpt).read_text())
    config = resolved_config(args, env_cfg, {"ckpt": str(args.ckpt), "step": args.step})
    write_manifest(out_dir, "attention-dump", config, args.seed, ["attention.json"])
    env = JobShopEnv(env_cfg)
    state = env.reset(seed=args.seed)
    for i in range(args.step):
        if env.sim.done:
            raise ValueError(f"step {args.step} is beyond episode end ({i} steps)")
        state = env.step(net.greedy_action(state)).features
    q, attention = net.q_values(state[None], net.zero_noise(), collect_attention=True)
    tensors = [[layer[0, h].tolist() for h in range(net.cfg.n_heads)]
               for layer in attention]
    (out_dir / "attention.json").write_text(json.dumps({
        "instance": args.instance, "step": args.step, "shape_per_head":
        [len(tensors[0][0]), len(tensors[0][0][0])], "weights": tensors}))
    print(f"wrote attention.json (layers={len(tensors)}, heads={net.cfg.n_heads})")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "ablate": cmd_ablate,
    "export-gantt": cmd_export_gantt,
    "export-graph": cmd_export_graph,
    "attention-dump": cmd_attention_dump,
}


def rerun_from_manifest(path: str, out_dir: str | None) -> list[str]:
    doc = json.loads(Path(path).read_text())
    cfg = doc["config"]
    argv = [doc["command"]]
    skip = {"argv_command", "instances", "rules", "components", "checkpoint",
            "episodes", "eval_episodes", "ckpt", "step", "rule", "trace", "seed"}
    flags = {
        "instance": "--instance", "schedule_cycle": "--k",
        "random_rate": "--random-rate", "shuffle": "--shuffle",
        "perturb_per_episode": "--perturb-per-episode",
        "d_feature": "--d-feature", "n_heads": "--n-heads",
        "n_layers": "--n-layers", "d_ff": "--d-ff",
        "buffer_size": "--buffer-size", "step_size": "--step-size",
        "batch_size": "--batch-size", "target_update": "--target-update",
        "gamma": "--gamma", "per_alpha": "--per-alpha", "per_beta": "--per-beta",
        "train_every": "--train-every",
    }
    for key, val in cfg.items():
        if key in skip or key not in flags:
            continue
        argv += [flags[key], str(val)]
    argv += ["--seed", str(doc["master_seed"])]
    if doc["command"] in ("train", "evaluate", "compare", "ablate"):
        argv += ["--episodes", str(cfg["episodes"])]
    if doc["command"] == "compare":
        argv += ["--instances", cfg["instances"], "--rules", cfg["rules"]]
    if doc["command"] in ("train", "ablate"):
        argv += ["--components", cfg.get("components", "double,dueling,per,noisy")]
    if doc["command"] == "ablate":
        argv += ["--eval-episodes", str(cfg["eval_episodes"])]
    if doc["command"] == "train":
        argv += ["--out", cfg.get("checkpoint", "checkpoint.json")]
    if doc["command"] in ("evaluate", "attention-dump"):
        argv += ["--ckpt", cfg["ckpt"]]
    if doc["command"] == "attention-dump":
        argv += ["--step", str(cfg["step"])]
    if doc["command"] == "export-gantt":
        argv += ["--rule", cfg["rule"]]
        if cfg.get("trace"):
            argv += ["--trace"]
    if doc["command"] == "export-graph" and cfg.get("rule"):
        argv += ["--rule", cfg["rule"]]
    if out_dir:
        argv += ["--out-dir", out_dir]
    return argv


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    args = parser.parse_args(argv)
    if args.from_manifest:
        argv = rerun_from_manifest(args.from_manifest, args.out_dir)
        args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        apply_config_file(args, argv)
        out_dir = Path(args.out_dir or f"runs/{args.command}")
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, out_dir)
    except (ParseError, KeyError, FileNotFoundError, ValueError,
            argparse.ArgumentTypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
