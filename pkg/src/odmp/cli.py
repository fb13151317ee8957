"""Command-line front end: ``odmp generate | run | analyze``.

Configuration is a TOML file::

    [instance]            # generator parameters, or ``path = "inst.jsonl"``
    family = "okpfot"
    n = 20
    m = 5
    T = 2000
    rho = 100.0
    seed = 0

    [schedule]
    gamma_list = [0.1, 1.0]
    mode = "diminishing"

    [input_model]
    kind = "uniform"      # uniform | grouped | batched | identity
    partition = "type"    # type | weekday_weekend | half_half | k_periodic
    seeds = [0, 1, 2]

    [run]
    variant = "standard"  # or "boxed" with y_box = [lo, hi]
    checkpoint_every = 10000
    dual_estimate_iters = 0

Command-line flags override the file.  Outputs go to ``--out``, else to
``$ODMP_OUT``, else to ``./odmp_out``.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import analysis, goalset, instances
from .dual_learner import (NumericalGuardError, RunTrace, StepSchedule, dual_regret,
                           estimate_dual_optimum, price_bound_check, run_online)
from .goalset import Boxed
from .input_models import (ArrivalOrder, PartitionError, batched_order, grouped_permutation,
                           identity_order, named_partition, uniform_permutation)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
OUT_ENV = "ODMP_OUT"
CSV_HEADER = "t,reward_avg,goalvio_avg,p_norm,eta"


class ConfigError(ValueError):
    pass


class TraceIOError(OSError):
    pass


# ---------------------------------------------------------------------------
# config handling


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def _parse_list(text, conv, what):
    items = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if conv is int and "-" in part[1:]:
                a, b = part[0] + part[1:].split("-", 1)[0], part[1:].split("-", 1)[1]
                items.extend(range(int(a), int(b) + 1))
            else:
                items.append(conv(part))
        except ValueError:
            raise ConfigError(f"bad {what} entry {part!r}") from None
    return items


def resolve_config(cfg: dict, args) -> dict:
    """Merge command-line overrides into the config tree and validate it."""
    cfg = copy.deepcopy(cfg)
    inst = cfg.setdefault("instance", {})
    sched = cfg.setdefault("schedule", {})
    model = cfg.setdefault("input_model", {})
    run = cfg.setdefault("run", {})
    if getattr(args, "seeds", None) is not None:
        model["seeds"] = _parse_list(args.seeds, int, "seed")
    if getattr(args, "gamma_list", None) is not None:
        sched["gamma_list"] = _parse_list(args.gamma_list, float, "gamma")
    if "gamma_list" not in sched:
        sched["gamma_list"] = [float(sched.get("gamma", 1.0))]
    model.setdefault("seeds", [0])
    model.setdefault("kind", "uniform")
    sched.setdefault("mode", "diminishing")
    run.setdefault("variant", "standard")
    run.setdefault("checkpoint_every", 10_000)
    run.setdefault("dual_estimate_iters", 0)
    inst.setdefault("family", "okpfot")

    if not isinstance(model["seeds"], list) or not model["seeds"]:
        raise ConfigError("the seed list is empty")
    if not sched["gamma_list"]:
        raise ConfigError("the gamma list is empty")
    for g in sched["gamma_list"]:
        if not (isinstance(g, (int, float)) and g > 0 and math.isfinite(g)):
            raise ConfigError(f"invalid gamma {g!r}")
    if model["kind"] not in ("uniform", "grouped", "batched", "identity"):
        raise ConfigError(f"unknown input model {model['kind']!r}")
    if run["variant"] not in ("standard", "boxed"):
        raise ConfigError(f"unknown run variant {run['variant']!r}")
    if run["variant"] == "boxed" and "y_box" not in run:
        raise ConfigError("the boxed variant needs run.y_box = [lower, upper]")
    if "path" in inst and not Path(inst["path"]).exists():
        raise ConfigError(f"instance file {inst['path']} does not exist")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.get("output", {}).get("dir") or os.environ.get(OUT_ENV) or "odmp_out"
    return Path(out)


def build_instance(inst_cfg: dict, seed=None) -> instances.Instance:
    if "path" in inst_cfg:
        return instances.load_instance(inst_cfg["path"])
    params = {k: v for k, v in inst_cfg.items() if k not in ("family", "path")}
    if seed is not None:
        params["seed"] = seed
    family = inst_cfg.get("family", "okpfot")
    try:
        if family == "okpfot":
            return instances.gen_okpfot(instances.OkpFotConfig(**params))
        if family == "aovc":
            if params.get("type_weights") is not None:
                params["type_weights"] = tuple(params["type_weights"])
            return instances.gen_aovc_synthetic(instances.AovcConfig(**params))
        if family == "assignment":
            if "tasks_range" in params:
                params["tasks_range"] = tuple(params["tasks_range"])
            return instances.gen_assignment(**params)
        if family == "example2":
            return instances.gen_example2(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for family {family!r}: {exc}") from None
    raise ConfigError(f"unknown instance family {family!r}")


def _apply_goal_override(inst: instances.Instance, cfg: dict) -> instances.Instance:
    if "goal" not in cfg:
        return inst
    return inst._replace(goal=goalset.goal_from_dict(cfg["goal"]))


def make_order(model: dict, inst: instances.Instance, seed: int) -> ArrivalOrder:
    kind, T = model["kind"], inst.T
    if kind == "identity":
        return identity_order(T)
    if kind == "uniform":
        return uniform_permutation(T, seed)
    part_kind = model.get("partition", "type")
    if part_kind == "type":
        part = instances.type_partition(inst.steps)
    else:
        part = named_partition(part_kind, T, model.get("K"))
    return grouped_permutation(part, seed) if kind == "grouped" else batched_order(part)


# ---------------------------------------------------------------------------
# file helpers


def atomic_write(path: Path, data, binary: bool = False):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb" if binary else "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def series_csv(series: analysis.MetricSeries) -> str:
    lines = [CSV_HEADER]
    v = series.seed(0)
    for row in zip(v.t, v.reward_avg, v.goalvio_avg, v.p_norm, v.eta):
        lines.append(",".join([str(int(row[0]))] + [repr(float(x)) for x in row[1:]]))
    return "\n".join(lines) + "\n"


def read_series_csv(path: Path, label: str) -> analysis.MetricSeries:
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise TraceIOError(f"{path}: unexpected header {header!r}")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise TraceIOError(f"{path}: corrupt trace ({exc})") from None
    if data.shape[0] == 0 or data.shape[1] != 5:
        raise TraceIOError(f"{path}: corrupt trace")
    return analysis.MetricSeries(data[:, 0].astype(np.int64), data[:, 1], data[:, 2],
                                 data[:, 3], data[:, 4], (label,))


def _save_checkpoint(path: Path, trace: RunTrace, chash: str):
    buf = io.BytesIO()
    decisions = np.empty(len(trace.decisions), dtype=object)
    decisions[:] = trace.decisions
    np.savez(buf, prices=trace.prices, rewards=trace.rewards, impacts=trace.impacts,
             supports=trace.supports, etas=trace.etas, oracle_obj=trace.oracle_obj,
             decisions=decisions, config_hash=np.array(chash))
    atomic_write(path, buf.getvalue(), binary=True)


def _load_checkpoint(path: Path, goal, chash: str):
    if not path.exists():
        return None
    try:
        with np.load(path, allow_pickle=True) as z:
            if str(z["config_hash"]) != chash:
                return None
            return RunTrace(goal, z["prices"], z["rewards"], z["impacts"], z["supports"],
                            z["etas"], z["oracle_obj"], list(z["decisions"]))
    except (OSError, ValueError, KeyError):
        return None


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: dict, out: Path, binary: bool = False, seeds=(None,)) -> list:
    """Write one instance file per seed (``None`` keeps the configured seed)."""
    written = []
    for seed in seeds:
        inst = _apply_goal_override(build_instance(cfg["instance"], seed), cfg)
        suffix = "" if seed is None else f"_s{seed}"
        path = out / f"instance{suffix}.{'npz' if binary else 'jsonl'}"
        path.parent.mkdir(parents=True, exist_ok=True)
        digest = instances.save_instance(inst, path, binary=binary)
        meta = {"path": path.name, "sha256": digest, "family": inst.family,
                "seed": inst.header.get("seed"), "config_hash": config_hash(cfg),
                "assumptions": instances.check_assumptions(inst)}
        atomic_write(path.with_name(path.stem + ".meta.json"), json.dumps(meta, indent=2) + "\n")
        written.append(path)
    return written


def run_cell(cfg: dict, inst_path: str, gamma: float, seed: int, out: str) -> dict:
    """One (gamma, seed) run; writes ``<cell>.csv`` and ``<cell>.json``."""
    out = Path(out)
    inst = _apply_goal_override(instances.load_instance(inst_path), cfg)
    run = cfg["run"]
    sched = StepSchedule(gamma, cfg["schedule"]["mode"], cfg["schedule"].get("horizon_T"))
    order = make_order(cfg["input_model"], inst, seed)
    steps = order.apply(inst.steps)
    goal = inst.goal
    if run["variant"] == "boxed":
        lo, hi = run["y_box"]
        goal = Boxed(goal, lo, hi)
    chash = config_hash(cfg)
    cell = f"cell_g{gamma!r}_s{seed}"
    ckpt = out / f"{cell}.ckpt.npz"
    resume = _load_checkpoint(ckpt, goal, chash)
    every = int(run["checkpoint_every"])
    trace = run_online(steps, goal, sched, constants=inst.constants,
                       config={"gamma": gamma, "seed": seed}, resume=resume,
                       checkpoint=lambda tr: _save_checkpoint(ckpt, tr, chash),
                       checkpoint_every=every,
                       assert_bound=run["variant"] == "standard")
    series = analysis.compute_metrics(trace, str(seed))
    atomic_write(out / f"{cell}.csv", series_csv(series))
    summary = {
        "cell": cell, "gamma": gamma, "seed": seed, "T": trace.T, "m": trace.m,
        "variant": run["variant"], "input_model": order.model, "config_hash": chash,
        "instance_sha256": instances.instance_hash(inst),
        "final": {"reward_avg": float(series.reward_avg[0, -1]),
                  "goalvio_avg": float(series.goalvio_avg[0, -1]),
                  "p_norm": float(np.linalg.norm(trace.prices[-1])),
                  "reward_total": float(trace.rewards.sum())},
        "dual_loss_sum": float(np.sum(trace.support_values() + trace.oracle_obj)),
        "price_bound": price_bound_check(trace, inst.constants),
    }
    zf_path = out / "dual_estimate.json"
    if zf_path.exists():
        zF = json.loads(zf_path.read_text())["zF_upper"]
        summary["dual_regret"] = dual_regret(trace, zF)
        summary["zF_upper"] = zF
    atomic_write(out / f"{cell}.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if ckpt.exists():
        ckpt.unlink()
    return summary


def cmd_run(cfg: dict, out: Path, workers: int = 1) -> list:
    out.mkdir(parents=True, exist_ok=True)
    if "path" in cfg["instance"]:
        inst_path = Path(cfg["instance"]["path"])
        inst = instances.load_instance(inst_path)
    else:
        inst = build_instance(cfg["instance"])
        inst_path = out / "instance.jsonl"
        instances.save_instance(inst, inst_path)
    inst = _apply_goal_override(inst, cfg)
    atomic_write(out / "run_config.json",
                 json.dumps({"config": cfg, "config_hash": config_hash(cfg)}, indent=2,
                            sort_keys=True, default=str) + "\n")
    iters = int(cfg["run"]["dual_estimate_iters"])
    if iters > 0:
        est = estimate_dual_optimum(inst.steps, inst.goal, iters=iters,
                                    constants=inst.constants)
        atomic_write(out / "dual_estimate.json",
                     json.dumps({"zF_upper": est.zF_upper, "p_star": est.p_star.tolist(),
                                 "iters": iters, "config_hash": config_hash(cfg)},
                                indent=2) + "\n")
    cells = [(g, s) for g in cfg["schedule"]["gamma_list"] for s in cfg["input_model"]["seeds"]]
    if workers <= 1:
        return [run_cell(cfg, str(inst_path), g, s, str(out)) for g, s in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_cell, cfg, str(inst_path), g, s, str(out)) for g, s in cells]
        return [f.result() for f in futures]


def _unevenness_table(T: int, m: int, gamma: float) -> dict:
    sched = StepSchedule(gamma)
    table = {}
    for kind, K in (("half_half", None), ("weekday_weekend", None), ("k_periodic", 8)):
        if kind == "k_periodic" and T < K:
            continue
        if kind == "weekday_weekend" and T < 6:
            continue
        rep = analysis.unevenness(named_partition(kind, T, K), sched, m)
        table[kind if K is None else f"{kind}_{K}"] = rep.to_dict()
    return table


def cmd_analyze(trace_dir: Path, out: Path) -> dict:
    if not trace_dir.is_dir():
        raise TraceIOError(f"trace directory {trace_dir} not found")
    summaries = sorted(trace_dir.glob("cell_*.json"))
    if not summaries:
        raise TraceIOError(f"no traces in {trace_dir}")
    groups = {}
    for path in summaries:
        try:
            summ = json.loads(path.read_text())
        except json.JSONDecodeError:
            raise TraceIOError(f"{path}: corrupt summary") from None
        csv_path = path.with_suffix(".csv")
        if not csv_path.exists():
            raise TraceIOError(f"{csv_path} missing")
        key = (summ.get("variant", "standard"), float(summ["gamma"]))
        groups.setdefault(key, []).append((summ, read_series_csv(csv_path, str(summ["seed"]))))

    report = {"groups": [], "trace_dir": str(trace_dir)}
    out.mkdir(parents=True, exist_ok=True)
    for (variant, gamma), items in sorted(groups.items()):
        items.sort(key=lambda it: it[0]["seed"])
        series = analysis.aggregate([s for _, s in items])
        regrets = [s["dual_regret"] for s, _ in items if "dual_regret" in s]
        entry = {
            "variant": variant, "gamma": gamma, "n_seeds": series.n_seeds,
            "seeds": [s["seed"] for s, _ in items], "T": series.T,
            "final": series.final(),
            "loglog_slope_goalvio": analysis.loglog_slope(series),
            "price_bound_holds": all(s["price_bound"].get("holds") is not False for s, _ in items),
            "config_hashes": sorted({s["config_hash"] for s, _ in items}),
            "unevenness": _unevenness_table(series.T, items[0][0]["m"], gamma),
        }
        if regrets:
            entry["dual_regret"] = {"mean": float(np.mean(regrets)), "min": float(np.min(regrets)),
                                    "max": float(np.max(regrets))}
        name = f"aggregate_{variant}_g{gamma!r}.csv"
        atomic_write(out / name, _aggregate_csv(series))
        entry["aggregate_csv"] = name
        report["groups"].append(entry)
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_float)
    atomic_write(out / "report.json", text + "\n")
    return report


def _json_float(x):
    return float(x)


def _aggregate_csv(series: analysis.MetricSeries) -> str:
    cols = ["reward_avg", "goalvio_avg", "p_norm"]
    head = ["t"] + [f"{c}_{s}" for c in cols for s in ("mean", "min", "max")] + ["eta"]
    views = {"mean": series.mean, "min": series.min, "max": series.max}
    lines = [",".join(head)]
    for i, t in enumerate(series.t):
        row = [str(int(t))]
        for c in cols:
            row += [repr(float(getattr(views[s], c)[i])) for s in ("mean", "min", "max")]
        row.append(repr(float(series.mean.eta[i])))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="odmp", description="Online decision making with goal sets")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./odmp_out)")
        p.add_argument("--seeds", help="comma-separated seeds or ranges, e.g. 0-19")

    g = sub.add_parser("generate", help="write an instance file")
    common(g)
    g.add_argument("--binary", action="store_true", help="write the packed .npz form")

    r = sub.add_parser("run", help="run (gamma, seed) cells")
    common(r)
    r.add_argument("--gamma-list", help="comma-separated stepsize parameters")
    r.add_argument("--workers", type=int, default=1)

    a = sub.add_parser("analyze", help="aggregate a directory of traces")
    a.add_argument("trace_dir")
    a.add_argument("--out", help="report directory (default: the trace directory)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "analyze":
            trace_dir = Path(args.trace_dir)
            cmd_analyze(trace_dir, Path(args.out) if args.out else trace_dir)
            return EXIT_OK
        cfg = resolve_config(load_config(args.config), args)
        out = _out_dir(args, cfg)
        if args.command == "generate":
            seeds = cfg["input_model"]["seeds"] if args.seeds is not None else [None]
            for path in cmd_generate(cfg, out, binary=args.binary, seeds=seeds):
                print(path)
        else:
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            cmd_run(cfg, out, workers=args.workers)
        return EXIT_OK
    except NumericalGuardError as exc:
        print(f"odmp: numerical guard: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except TraceIOError as exc:
        print(f"odmp: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, goalset.GoalSpecError, instances.InstanceError, PartitionError,
            ValueError) as exc:
        print(f"odmp: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"odmp: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
