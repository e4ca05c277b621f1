"""Command-line harness: gen-er, solve, pgw, train, ablate, report.

Every subcommand accepts ``--config FILE.json``; keys are the long flag
names with dashes replaced by underscores.  Explicit flags override the
config file, which overrides built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .graph import Graph, generate_er, load_graph
from .policy import init_params, load_params, save_params
from .ppo import PolicyCollapseError, StepMetrics, TrainConfig, Trainer
from .rounding import pgw
from .sdp import DEFAULT_MAX_SWEEPS, DEFAULT_TOL, Embedding, default_rank, load_embedding, save_embedding, solve_sdp

log = logging.getLogger("maxcut_rl")

METRICS_SCHEMA = "maxcut-rl/metrics/v1"
ABLATION_SCHEMA = "maxcut-rl/ablation/v1"
METRICS_COLUMNS = ["t", "avg_cut", "max_cut", "mean_reward", "loss_ppo", "loss_vf", "wall_ms"]
ABLATION_COLUMNS = [
    "instance", "l", "pgw_avg", "pgw_max", "agent_avg", "agent_max",
    "pct_increase_avg", "pct_increase_max", "agent_best", "status",
]
DEFAULT_L_LIST = (64, 128, 256, 512, 1024)
PGW_SEED_OFFSET = 1_000_003

SOLVE_DEFAULTS = {"rank": None, "tol": DEFAULT_TOL, "max_sweeps": DEFAULT_MAX_SWEEPS, "seed": 0,
                  "cache_dir": ".maxcut-cache", "out": None}
PGW_DEFAULTS = {"B": 256, "seed": 0, "out": None, "incumbent": None}
TRAIN_DEFAULTS = {
    "K": 256, "T": 1500, "l": 256, "lr": 1e-3, "gamma": 0.99, "eps_clip": 0.2, "t_step": 16,
    "n_epochs": 4, "minibatch": 512, "seed": 0, "optimizer": "sgd", "reward_baseline": False,
    "B": 256, "pgw_seed": None, "checkpoint_every": 0, "init_checkpoint": None,
    "deterministic": True, "out_dir": "runs",
}


class HarnessError(RuntimeError):
    pass


@dataclass
class ComparisonRow:
    instance: str
    pgw_avg: float
    pgw_max: int
    agent_avg: float
    agent_max: int
    pct_increase_avg: float
    pct_increase_max: float

    @classmethod
    def build(cls, instance: str, pgw_avg, pgw_max, agent_avg, agent_max) -> "ComparisonRow":
        return cls(instance, float(pgw_avg), int(pgw_max), float(agent_avg), int(agent_max),
                   pct_increase(agent_avg, pgw_avg), pct_increase(agent_max, pgw_max))


def pct_increase(agent: float, base: float) -> float:
    if base == 0:
        return math.nan
    return 100.0 * (agent - base) / base


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _graph_source(path: Path, g: Graph) -> dict:
    return {"path": str(path), "hash": g.content_hash(), "n": g.n, "m": g.m}


def _read_graph(path: str | Path, experiment: bool = False) -> Graph:
    path = Path(path)
    if not path.exists():
        raise HarnessError(f"graph file {path} does not exist")
    g = load_graph(path)
    if experiment and not g.is_unit_weight:
        log.warning("graph %s has non-unit edge weights; results are outside the validated unit-weight setting", path)
    return g


def _read_embedding(path: str | Path, g: Graph) -> tuple[Embedding, dict]:
    path = Path(path)
    if not path.exists():
        raise HarnessError(f"embedding file {path} does not exist")
    emb, meta = load_embedding(path)
    want = g.content_hash()
    got = meta.get("graph_hash")
    if got != want:
        raise HarnessError(f"embedding {path} was solved for graph {got}, not {want}")
    if emb.n != g.n:
        raise HarnessError(f"embedding has {emb.n} vectors but graph has {g.n} nodes")
    return emb, meta


# ---------------------------------------------------------------- gen-er

def cmd_gen_er(n: int, p: float, seed: int, out_path: str | Path) -> Path:
    g = generate_er(n, p, seed)
    out_path = Path(out_path)
    data = g.to_json_dict()
    data["generator"] = {"kind": "er-splitmix64", "n": n, "p": p, "seed": seed}
    atomic_write_text(out_path, json.dumps(data, separators=(",", ":")) + "\n")
    return out_path


# ---------------------------------------------------------------- solve

def _cache_key(graph_hash: str, d: int, tol: float, max_sweeps: int, seed: int) -> str:
    raw = json.dumps([graph_hash, d, repr(tol), max_sweeps, seed])
    return hashlib.sha256(raw.encode()).hexdigest()[:20]


def cmd_solve(graph_path, rank=None, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS, seed=0,
              cache_dir=".maxcut-cache", out=None) -> tuple[Path, dict]:
    """Solve (or fetch from cache) and return (embedding path, report dict)."""
    graph_path = Path(graph_path)
    g = _read_graph(graph_path)
    d = default_rank(g.n) if rank is None else int(rank)
    key = _cache_key(g.content_hash(), d, tol, max_sweeps, seed)
    path = Path(out) if out is not None else Path(cache_dir) / f"{key}.emb"
    meta_path = path.with_name(path.name + ".json")

    if path.exists() and meta_path.exists():
        try:
            emb, meta = load_embedding(path)
            if meta.get("cache_key") != key or emb.n != g.n or emb.d != d:
                raise ValueError("cache metadata does not match request")
            meta = dict(meta, cache_hit=True)
            return path, meta
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            log.warning("discarding corrupt cache entry %s (%s); re-solving", path, exc)

    t0 = time.perf_counter()
    emb, report = solve_sdp(g, d=d, tol=tol, max_sweeps=max_sweeps, seed=seed)
    meta = {
        "cache_key": key,
        "graph_hash": g.content_hash(),
        "seed": seed,
        "tol": tol,
        "max_sweeps": max_sweeps,
        "sweeps": report.iterations,
        "manifest": {"graph": _graph_source(graph_path, g),
                     "sdp": {"d": d, "tol": tol, "max_sweeps": max_sweeps, "seed": seed}},
        **report.to_dict(),
    }
    save_embedding(path, emb, meta)
    meta = dict(meta, n=emb.n, d=emb.d, cache_hit=False, solve_ms=(time.perf_counter() - t0) * 1e3)
    return path, meta


# ---------------------------------------------------------------- pgw

def cmd_pgw(graph_path, embedding_path, B=256, seed=0, out=None, incumbent=None) -> dict:
    g = _read_graph(graph_path, experiment=True)
    emb, meta = _read_embedding(embedding_path, g)
    t0 = time.perf_counter()
    res = pgw(g, emb, B, np.random.default_rng(seed))
    result = {
        "avg_cut": res.avg_cut,
        "max_cut": res.max_cut,
        "B": B,
        "seed": seed,
        "wall_ms": (time.perf_counter() - t0) * 1e3,
        "manifest": {
            "graph": _graph_source(Path(graph_path), g),
            "sdp": meta.get("manifest", {}).get("sdp"),
            "embedding": str(embedding_path),
            "rounding": {"B": B, "seed": seed},
        },
    }
    if out is not None:
        atomic_write_text(out, _json(result))
    if incumbent is not None:
        atomic_write_text(incumbent, "".join(f"{int(x)}\n" for x in res.incumbent))
    return result


# ---------------------------------------------------------------- train

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _metrics_row(m: StepMetrics) -> list[str]:
    return [_fmt(getattr(m, c)) for c in METRICS_COLUMNS]


def _train_config(opts: dict) -> TrainConfig:
    return TrainConfig(
        K=opts["K"], T=opts["T"], t_step=opts["t_step"], n_epochs=opts["n_epochs"],
        minibatch=opts["minibatch"], lr=opts["lr"], eps_clip=opts["eps_clip"], gamma=opts["gamma"],
        seed=opts["seed"], optimizer=opts["optimizer"], reward_baseline=opts["reward_baseline"],
    )


def _run_training(g: Graph, emb: Embedding, opts: dict, out_dir: Path, manifest: dict,
                  metrics_name: str = "metrics.csv", ckpt_name: str = "checkpoint.bin"):
    config = _train_config(opts)
    if opts.get("init_checkpoint"):
        params = load_params(opts["init_checkpoint"])
        if params.d != emb.d:
            raise HarnessError(f"checkpoint has d={params.d}, embedding has d={emb.d}")
    else:
        params = init_params(emb.d, opts["l"], opts["seed"])
    trainer = Trainer(g, emb, config, params)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / metrics_name
    last: StepMetrics | None = None
    t0 = time.perf_counter()
    every = int(opts.get("checkpoint_every") or 0)
    with open(metrics_path, "w", newline="") as fh:
        fh.write(f"# schema={METRICS_SCHEMA}\n")
        fh.write(f"# manifest={json.dumps(manifest, sort_keys=True, separators=(',', ':'))}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for _ in range(config.T):
            m = trainer.step()
            if not opts["deterministic"]:
                m.wall_ms = (time.perf_counter() - t0) * 1e3
            writer.writerow(_metrics_row(m))
            fh.flush()
            last = m
            if every and (m.t + 1) % every == 0:
                save_params(out_dir / f"checkpoint_t{m.t + 1}.bin", trainer.params)
    save_params(out_dir / ckpt_name, trainer.params)
    return trainer, last, metrics_path


def _resolve_pgw_seed(opts: dict) -> int:
    return opts["pgw_seed"] if opts.get("pgw_seed") is not None else opts["seed"] + PGW_SEED_OFFSET


def _train_manifest(graph_path, g, emb_path, meta, opts, out_dir) -> dict:
    cfg = _train_config(opts).to_dict()
    cfg.update({"l": opts["l"], "init_checkpoint": opts.get("init_checkpoint"),
                "deterministic": opts["deterministic"]})
    return {
        "graph": _graph_source(Path(graph_path), g),
        "sdp": meta.get("manifest", {}).get("sdp"),
        "embedding": str(emb_path),
        "rounding": {"B": opts["B"], "seed": _resolve_pgw_seed(opts)},
        "train": cfg,
        "output_dir": str(out_dir),
    }


def cmd_train(graph_path, embedding_path, **flags) -> dict:
    """Train, write metrics.csv / checkpoint.bin / comparison.json, return the comparison."""
    opts = {**TRAIN_DEFAULTS, **{k: v for k, v in flags.items() if v is not None}}
    g = _read_graph(graph_path, experiment=True)
    emb, meta = _read_embedding(embedding_path, g)
    out_dir = Path(opts["out_dir"])
    manifest = _train_manifest(graph_path, g, embedding_path, meta, opts, out_dir)
    trainer, last, metrics_path = _run_training(g, emb, opts, out_dir, manifest)

    base = pgw(g, emb, opts["B"], np.random.default_rng(_resolve_pgw_seed(opts)))
    instance = Path(graph_path).stem
    if last is None:
        row = ComparisonRow.build(instance, base.avg_cut, base.max_cut, math.nan, 0)
    else:
        row = ComparisonRow.build(instance, base.avg_cut, base.max_cut, last.avg_cut, last.max_cut)
    result = {**asdict(row), "agent_best": trainer.best_cut, "manifest": manifest,
              "metrics": str(metrics_path)}
    atomic_write_text(out_dir / "comparison.json", _json(result))
    return result


# ---------------------------------------------------------------- ablate

def cmd_ablate(graph_path, embedding_path, l_list=DEFAULT_L_LIST, **flags) -> list[dict]:
    """Train once per hidden size and write ablation.csv with % increase columns."""
    opts = {**TRAIN_DEFAULTS, **{k: v for k, v in flags.items() if v is not None}}
    g = _read_graph(graph_path, experiment=True)
    emb, meta = _read_embedding(embedding_path, g)
    out_dir = Path(opts["out_dir"])
    base = pgw(g, emb, opts["B"], np.random.default_rng(_resolve_pgw_seed(opts)))
    instance = Path(graph_path).stem
    rows = []
    for l in l_list:
        run_opts = dict(opts, l=int(l))
        manifest = _train_manifest(graph_path, g, embedding_path, meta, run_opts, out_dir)
        try:
            trainer, last, _ = _run_training(g, emb, run_opts, out_dir, manifest,
                                             metrics_name=f"metrics_l{l}.csv", ckpt_name=f"checkpoint_l{l}.bin")
            if last is None:
                raise HarnessError("no training steps were run (T=0)")
            row = ComparisonRow.build(instance, base.avg_cut, base.max_cut, last.avg_cut, last.max_cut)
            rows.append({**asdict(row), "l": int(l), "agent_best": trainer.best_cut, "status": "ok"})
        except (HarnessError, PolicyCollapseError, RuntimeError, ValueError) as exc:
            log.error("ablation run l=%s failed: %s", l, exc)
            rows.append({"instance": instance, "l": int(l), "pgw_avg": base.avg_cut, "pgw_max": base.max_cut,
                         "agent_avg": math.nan, "agent_max": "", "pct_increase_avg": math.nan,
                         "pct_increase_max": math.nan, "agent_best": "", "status": f"error: {exc}"})

    manifest = _train_manifest(graph_path, g, embedding_path, meta, opts, out_dir)
    manifest["ablation"] = {"l_list": [int(x) for x in l_list]}
    buf = io.StringIO()
    buf.write(f"# schema={ABLATION_SCHEMA}\n")
    buf.write(f"# manifest={json.dumps(manifest, sort_keys=True, separators=(',', ':'))}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for r in rows:
        writer.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in ABLATION_COLUMNS])
    atomic_write_text(out_dir / "ablation.csv", buf.getvalue())
    return rows


# ---------------------------------------------------------------- report

def read_table(path: str | Path) -> list[dict]:
    """Rows of a metrics or ablation CSV (comment lines skipped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_manifest(path: str | Path) -> dict:
    with open(path) as fh:
        for ln in fh:
            if ln.startswith("# manifest="):
                return json.loads(ln[len("# manifest="):])
    raise HarnessError(f"{path} has no embedded manifest")


def cmd_report(paths) -> str:
    """Markdown table of comparison JSON files or ablation CSVs."""
    header = "| instance | l | pGW avg | pGW max | agent avg | agent max | % avg | % max |"
    lines = [header, "|---" * 8 + "|"]
    for p in paths:
        p = Path(p)
        if p.suffix == ".json":
            r = json.loads(p.read_text())
            rows = [dict(r, l=r["manifest"]["train"]["l"])]
        else:
            rows = read_table(p)
        for r in rows:
            lines.append("| {} | {} | {:.2f} | {} | {:.2f} | {} | {:.3f} | {:.3f} |".format(
                r["instance"], r["l"], float(r["pgw_avg"]), r["pgw_max"], float(r["agent_avg"]),
                r["agent_max"], float(r["pct_increase_avg"]), float(r["pct_increase_max"])))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- argparse

def _add_train_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--K", type=int, help="parallel chains (256)")
    sp.add_argument("--T", type=int, help="training steps (1500)")
    sp.add_argument("--l", type=int, help="hidden dimension (256)")
    sp.add_argument("--lr", type=float, help="learning rate (0.001)")
    sp.add_argument("--gamma", type=float, help="discount (0.99)")
    sp.add_argument("--eps-clip", type=float, help="PPO clip range (0.2)")
    sp.add_argument("--t-step", type=int, help="steps between updates (16)")
    sp.add_argument("--n-epochs", type=int, help="epochs per update (4)")
    sp.add_argument("--minibatch", type=int, help="minibatch size (512)")
    sp.add_argument("--seed", type=int, help="training seed (0)")
    sp.add_argument("--optimizer", choices=["sgd", "adam"])
    sp.add_argument("--reward-baseline", action="store_const", const=True,
                    help="subtract the running mean reward from rewards")
    sp.add_argument("--B", type=int, help="pGW samples for the comparison (256)")
    sp.add_argument("--pgw-seed", type=int, help=f"comparison pGW seed (seed + {PGW_SEED_OFFSET})")
    sp.add_argument("--checkpoint-every", type=int, help="write a checkpoint every N steps (0 = off)")
    sp.add_argument("--init-checkpoint", help="start from a saved checkpoint")
    sp.add_argument("--deterministic", dest="deterministic", action="store_const", const=True)
    sp.add_argument("--no-deterministic", dest="deterministic", action="store_const", const=False,
                    help="record wall-clock times in the metrics stream")
    sp.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxcut-rl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-er", help="write a seeded Erdos-Renyi graph as JSON")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("solve", help="solve the SDP relaxation (cached)")
    sp.add_argument("--config")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--rank", type=int, help="embedding dimension d (default ceil(sqrt(2n))+1; d=n for full rank)")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-sweeps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cache-dir")
    sp.add_argument("--out", help="explicit embedding path instead of the cache")

    sp = sub.add_parser("pgw", help="batched random-hyperplane rounding baseline")
    sp.add_argument("--config")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--embedding", required=True)
    sp.add_argument("--B", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.add_argument("--incumbent", help="write the best assignment, one +-1 per line")

    sp = sub.add_parser("train", help="train the PPO rounding agent and compare with pGW")
    sp.add_argument("--config")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--embedding", required=True)
    _add_train_flags(sp)

    sp = sub.add_parser("ablate", help="sweep the hidden dimension l")
    sp.add_argument("--config")
    sp.add_argument("--graph", required=True)
    sp.add_argument("--embedding", required=True)
    sp.add_argument("--l-list", help="comma-separated hidden sizes (64,128,256,512,1024)")
    _add_train_flags(sp)

    sp = sub.add_parser("report", help="tabulate comparison.json / ablation.csv files")
    sp.add_argument("inputs", nargs="+")
    return parser


def _merge(args: argparse.Namespace, defaults: dict, skip=()) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        cfg = json.loads(Path(args.config).read_text())
        unknown = set(cfg) - set(defaults)
        if unknown:
            raise HarnessError(f"unknown config keys: {sorted(unknown)}")
    merged = {**defaults, **cfg}
    for k in defaults:
        v = getattr(args, k, None)
        if v is not None and k not in skip:
            merged[k] = v
    return merged


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "gen-er":
            cmd_gen_er(args.n, args.p, args.seed, args.out)
            print(args.out)
        elif args.command == "solve":
            o = _merge(args, SOLVE_DEFAULTS)
            path, meta = cmd_solve(args.graph, **o)
            print(_json({"embedding": str(path), **{k: v for k, v in meta.items() if k != "manifest"}}), end="")
        elif args.command == "pgw":
            o = _merge(args, PGW_DEFAULTS)
            res = cmd_pgw(args.graph, args.embedding, **o)
            print(_json({k: v for k, v in res.items() if k != "manifest"}), end="")
        elif args.command == "train":
            o = _merge(args, TRAIN_DEFAULTS)
            res = cmd_train(args.graph, args.embedding, **o)
            print(_json({k: v for k, v in res.items() if k != "manifest"}), end="")
        elif args.command == "ablate":
            o = _merge(args, {**TRAIN_DEFAULTS, "l_list": None})
            l_list = o.pop("l_list") or DEFAULT_L_LIST
            if isinstance(l_list, str):
                l_list = [int(x) for x in l_list.split(",") if x.strip()]
            rows = cmd_ablate(args.graph, args.embedding, l_list=l_list, **o)
            print(cmd_report_rows(rows), end="")
        elif args.command == "report":
            print(cmd_report(args.inputs), end="")
    except (HarnessError, PolicyCollapseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def cmd_report_rows(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for r in rows:
        writer.writerow([r[c] if isinstance(r[c], str) else _fmt(r[c]) for c in ABLATION_COLUMNS])
    return buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
