"""Command-line entry point: ``summax run | reproduce | verify | check-function``.

Exit codes: 0 success, 1 a check or property failed, 2 usage or config
error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from sklearn.base import clone

from . import harness, verify
from ._validation import mask_to_arms
from .envs import ENVIRONMENTS, make_environment
from .policies import POLICIES
from .setfn import (
    check_monotone_submodular,
    check_pseudo_concave,
    check_pseudo_submodular,
    load_function,
    subset_decomposition,
)

log = logging.getLogger("summax")

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

CONFIG_KEYS = {"env", "policies", "T", "seeds", "out", "comparator", "gamma"}
ENV_KEYS = {"kind", "K", "M", "params"}
POLICY_KEYS = {"name", "params"}
SEED_KEYS = {"count", "base"}
COMPARATOR_KEYS = {"subset", "max_size"}
DEFAULT_CONFIG = {
    "seeds": {"count": 1, "base": 0},
    "out": "runs",
    "comparator": {"subset": "best", "max_size": "M"},
    "gamma": None,
}


class ConfigError(ValueError):
    pass


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    extra = set(section) - allowed
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as JSON when possible."""
    config = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.split(".")
        node = config
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(value)
    return config


def validate_config(config: dict) -> dict:
    """Fill defaults and reject anything unknown before any compute happens."""
    if "config" in config and "config_hash" in config:
        config = config["config"]  # a metadata file replays its config
    _reject_unknown(config, CONFIG_KEYS, "config")
    for key in ("env", "policies", "T"):
        if key not in config:
            raise ConfigError(f"config is missing {key!r}")
    out = copy.deepcopy(DEFAULT_CONFIG)
    out.update(copy.deepcopy(config))
    env = out["env"]
    _reject_unknown(env, ENV_KEYS, "env")
    if env.get("kind") not in ENVIRONMENTS:
        raise ConfigError(f"unknown env kind {env.get('kind')!r}; choose from {sorted(ENVIRONMENTS)}")
    if not isinstance(out["T"], int) or out["T"] < 1:
        raise ConfigError("T must be a positive integer")
    seeds = out["seeds"]
    if isinstance(seeds, int):
        seeds = {"count": seeds, "base": 0}
    seeds = {"count": 1, "base": 0, **seeds}
    _reject_unknown(seeds, SEED_KEYS, "seeds")
    if not isinstance(seeds["count"], int) or seeds["count"] < 1:
        raise ConfigError("seeds.count must be a positive integer")
    out["seeds"] = seeds
    policies = out["policies"]
    if not isinstance(policies, list) or not policies:
        raise ConfigError("policies must be a nonempty list")
    normalized = []
    for spec in policies:
        spec = {"name": spec} if isinstance(spec, str) else spec
        _reject_unknown(spec, POLICY_KEYS, "policy spec")
        if spec.get("name") not in POLICIES:
            raise ConfigError(f"unknown policy {spec.get('name')!r}; choose from {sorted(POLICIES)}")
        normalized.append({"name": spec["name"], "params": dict(spec.get("params", {}))})
    out["policies"] = normalized
    comp = {**DEFAULT_CONFIG["comparator"], **(out["comparator"] or {})}
    _reject_unknown(comp, COMPARATOR_KEYS, "comparator")
    out["comparator"] = comp
    return out


def _build_env(env_cfg: dict, horizon: int):
    kind = env_cfg["kind"]
    params = dict(env_cfg.get("params", {}))
    cls = ENVIRONMENTS[kind]
    accepted = set(cls().get_params()) if kind != "scripted" else {"script", "path"}
    names = {"K": "n_arms", "M": "n_slots"}
    for short, long in names.items():
        if short in env_cfg and long in accepted:
            params.setdefault(long, env_cfg[short])
    if "horizon" in accepted:
        params.setdefault("horizon", horizon)
    unknown = set(params) - accepted
    if unknown:
        raise ConfigError(f"unknown parameter(s) for env {kind!r}: {sorted(unknown)}")
    try:
        return make_environment(kind, **params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _build_policies(config: dict, env, probe):
    horizon = config["T"]
    n_arms = getattr(probe, "n_arms_", None) or config["env"].get("K")
    n_slots = config["env"].get("M")
    defaults = {"n_arms": n_arms, "horizon": horizon, "reward_range": tuple(probe.reward_range)}
    if n_slots is not None:
        defaults.update(n_slots=n_slots, n_draws=n_slots)
    cap = getattr(probe, "cost_cap_", None)
    if cap is not None:
        defaults["cost_cap"] = cap
    policies = []
    for spec in config["policies"]:
        cls = POLICIES[spec["name"]]
        accepted = set(cls().get_params())
        unknown = set(spec["params"]) - accepted
        if unknown:
            raise ConfigError(f"unknown parameter(s) for policy {spec['name']!r}: {sorted(unknown)}")
        params = {k: v for k, v in defaults.items() if k in accepted and v is not None}
        if spec["name"] == "flexp3":
            params.pop("n_draws", None)
        params.update(spec["params"])
        if "reward_range" in params:
            params["reward_range"] = tuple(params["reward_range"])
        policies.append(cls(**params))
    return policies


def _comparators(config, env, traces):
    comp = config["comparator"]
    out = []
    for tr in traces:
        if comp["subset"] in ("best", None):
            max_size = comp["max_size"]
            max_size = -1 if max_size == "M" else max_size
            cmp = harness.best_fixed_subset(env, tr.replica, tr.n_draws, max_size, config["gamma"])
        else:
            cmp = harness.fixed_comparator(env, tr.replica, comp["subset"])
        out.append(cmp)
    return out


def _write_regret(path: Path, rows: list[tuple[str, np.ndarray]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "policy", "mean_gamma_regret", "ci_halfwidth"])
        for name, series in rows:
            mean, half = (harness.mean_and_halfwidth(series) if len(series) > 1
                          else (series[0], np.zeros_like(series[0])))
            for i in range(len(mean)):
                writer.writerow([i + 1, name, repr(float(mean[i])), repr(float(half[i]))])


def cmd_run(args) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    if "config" in raw and "config_hash" in raw:
        raw = raw["config"]
    overrides = list(args.overrides)
    if args.seeds is not None:
        overrides.append(f"seeds.count={args.seeds}")
    if args.out is not None:
        overrides.append(f"out={json.dumps(str(args.out))}")
    config = validate_config(apply_overrides(raw, overrides))
    seeds = list(range(config["seeds"]["base"], config["seeds"]["base"] + config["seeds"]["count"]))
    env = _build_env(config["env"], config["T"])
    probe = clone(env).reset(seeds[:1])
    policies = _build_policies(config, env, probe)
    horizon = config["T"]
    if config["env"]["kind"] == "scripted" and probe.horizon_ < horizon:
        raise ConfigError(f"script has {probe.horizon_} rounds but T={horizon}")
    out = Path(config["out"])
    grid = harness.run_grid(policies, env, seeds, horizon, config, args.workers)
    full_env = clone(env)
    if "horizon" in full_env.get_params():
        full_env.set_params(horizon=horizon)
    full_env.reset(seeds)
    aggregates, regret_rows = [], []
    for name, traces in grid.items():
        for tr in traces:
            harness.export_csv(tr, out / "traces" / f"{name}_seed{tr.seed}.csv")
        if len(traces) > 1:
            aggregates.append(harness.aggregate(traces))
        comparators = _comparators(config, full_env, traces)
        regret_rows.append((name, np.array([
            harness.gamma_regret(tr, c, config["gamma"]) for tr, c in zip(traces, comparators)
        ])))
        final = np.mean([tr.cum_reward[-1] for tr in traces])
        print(f"{name:12s} mean final cumulative reward {final:.4f} over {len(traces)} seeds")
    if aggregates:
        harness.export_csv(aggregates, out / "aggregate.csv")
    _write_regret(out / "regret.csv", regret_rows)
    harness.write_metadata(out / "metadata.json", config, seeds)
    print(f"wrote results to {out}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = Path(args.out or f"reproduce_{args.figure}")
    seeds = args.seeds if args.seeds is not None else harness.FULL_SEEDS
    aggs = harness.reproduce_figure(args.figure, args.scale, seeds, 0, args.workers)
    harness.export_csv(list(aggs.values()), out / "aggregate.csv")
    env, policies, horizon = harness.figure_setup(args.figure, args.scale)
    config = {"figure": args.figure, "scale": args.scale, "T": horizon,
              "env": env.get_params(), "policies": {p.name: p.get_params() for p in policies}}
    harness.write_metadata(out / "metadata.json", config, list(range(seeds)))
    print(f"figure {args.figure}: T={horizon}, K={harness.FULL_ARMS}, "
          f"M={harness.FULL_SLOTS}, {seeds} seeds")
    for name, agg in aggs.items():
        mean, half = agg.final()
        print(f"  {name:12s} final cumulative reward {mean:10.2f} +/- {half:.2f}")
    print(f"wrote results to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_suite(args.suite)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:18s} measured={r.measured:.6g} target={r.bound_or_target:.6g} "
              f"tol={r.tolerance:.3g}  {r.details}")
    verify.write_report(results, args.out)
    print(f"report written to {args.out}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def _format_subset(mask: int) -> str:
    return "{" + ",".join(str(i) for i in mask_to_arms(mask)) + "}"


def cmd_check_function(args) -> int:
    f = load_function(args.path)
    selected = []
    if args.all or args.monotone_submodular:
        selected.append(check_monotone_submodular)
    if args.all or args.pseudo_submodular:
        selected.append(check_pseudo_submodular)
    if args.all or args.pseudo_concave:
        selected.append(check_pseudo_concave)
    if not selected and not args.decompose:
        selected = [check_monotone_submodular, check_pseudo_submodular, check_pseudo_concave]
    ok = True
    for check in selected:
        report = check(f)
        ok &= report.holds
        if report.name == "monotone_submodular":
            print(f"monotone: {report.detail.get('monotone')}")
            print(f"submodular: {report.detail.get('submodular')}")
        print(f"{report.name}: {'holds' if report.holds else 'fails'}")
        if report.witness is not None:
            w = report.witness
            print(f"  witness subset {_format_subset(w.subset)} violation {w.violation:.6g}")
            if w.vector is not None:
                print(f"  direction {np.array2string(w.vector, precision=6)}")
            for key, value in w.detail.items():
                print(f"  {key}: {value}")
    if args.decompose:
        d = subset_decomposition(f)
        print("d(S) for every subset S:")
        for mask, value in enumerate(d.coeffs):
            print(f"  {_format_subset(mask):24s} {value:.12g}")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="summax", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run policies on an environment from a config file")
    run.add_argument("--config", required=True, help="JSON config or a metadata file to replay")
    run.add_argument("--out", help="output directory (overrides the config)")
    run.add_argument("--seeds", type=int, help="number of seeds (overrides the config)")
    run.add_argument("--workers", type=int, default=None, help="worker processes (default: cores)")
    run.add_argument("overrides", nargs="*", metavar="key=value",
                     help="dotted config overrides such as env.K=10")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("reproduce", help="regenerate one experiment panel")
    rep.add_argument("--figure", required=True, choices=sorted(harness.FIGURES))
    rep.add_argument("--scale", type=float, default=0.2, help="fraction of T=10^5 (default 0.2)")
    rep.add_argument("--seeds", type=int, default=None, help="number of seeds (default 35)")
    rep.add_argument("--out", help="output directory")
    rep.add_argument("--workers", type=int, default=None)
    rep.set_defaults(func=cmd_reproduce)

    ver = sub.add_parser("verify", help="run the verification checks")
    ver.add_argument("--suite", default="all", choices=["all", *verify.CHECKS])
    ver.add_argument("--out", default="verify_report.json", help="JSON report path")
    ver.set_defaults(func=cmd_verify)

    chk = sub.add_parser("check-function", help="property checks on a set-function file")
    chk.add_argument("path")
    chk.add_argument("--pseudo-concave", action="store_true")
    chk.add_argument("--pseudo-submodular", action="store_true")
    chk.add_argument("--monotone-submodular", action="store_true")
    chk.add_argument("--all", action="store_true")
    chk.add_argument("--decompose", action="store_true", help="print the subset decomposition")
    chk.set_defaults(func=cmd_check_function)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "scale", None) is not None and not 0 < args.scale <= 1:
        parser.error("--scale must lie in (0, 1]")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"summax: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if args.command in ("run", "check-function"):
            print(f"summax: invalid input: {exc}", file=sys.stderr)
            return EXIT_USAGE
        log.exception("runtime failure")
        print(f"summax: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"summax: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
