"""Command line runner: ``verify``, ``maslov`` and ``sweep``.

Exit codes: 0 success, 1 a check or index mismatch, 2 usage or config error.
Outputs are JSON (sorted keys) and CSV with full-precision floats and no
timestamps, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from handlemaslov.errors import ConstructionError, GluingError, NumericError, ParameterError
from handlemaslov.lagrangians import build_scenario_A, build_scenario_B
from handlemaslov.maslov import epsilon_sweep, scenario_indices
from handlemaslov.smoothfn import default_profiles
from handlemaslov.verify import run_all, search_mu

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_EPSILON = {"A": 0.05, "B": 0.01}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    scenario: str = "A"
    n: int = 3
    epsilon: float | None = None
    mu: float | str = 0.05
    delta: float = 0.7
    gauge_ks: list = field(default_factory=lambda: [0])
    epsilons: list = field(default_factory=list)
    seed: int = 0
    handle_samples: int = 10000
    ray_margin: float = 1e-3

    def resolved_epsilon(self):
        return DEFAULT_EPSILON[self.scenario] if self.epsilon is None else self.epsilon


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_real(v):
    return (isinstance(v, (int, float)) and not isinstance(v, bool)) and math.isfinite(v)


def parse_config(data):
    """Validate a decoded JSON object; unknown keys are rejected."""
    _require(isinstance(data, dict), "config must be a JSON object")
    known = set(Config.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    _require(not unknown, f"unknown config keys: {unknown}")
    cfg = Config(**data)
    _require(cfg.scenario in ("A", "B"), "scenario must be 'A' or 'B'")
    _require(_is_int(cfg.n) and cfg.n >= 2, "n must be an integer >= 2")
    _require(cfg.epsilon is None or (_is_real(cfg.epsilon) and 0 < cfg.epsilon < 1 / math.sqrt(2)),
             "epsilon must lie in (0, 1/sqrt 2)")
    _require(cfg.mu == "search" or (_is_real(cfg.mu) and cfg.mu > 0), "mu must be positive or 'search'")
    _require(_is_real(cfg.delta) and 0 < cfg.delta < 1, "delta must lie in (0, 1)")
    _require(isinstance(cfg.gauge_ks, list) and cfg.gauge_ks and all(_is_int(k) for k in cfg.gauge_ks),
             "gauge_ks must be a non-empty list of integers")
    _require(cfg.scenario == "A" or cfg.gauge_ks == [0], "gauge_ks other than [0] need scenario A")
    _require(isinstance(cfg.epsilons, list)
             and all(_is_real(e) and 0 < e < 1 / math.sqrt(2) for e in cfg.epsilons),
             "epsilons must be a list of values in (0, 1/sqrt 2)")
    _require(_is_int(cfg.seed) and cfg.seed >= 0, "seed must be a non-negative integer")
    _require(_is_int(cfg.handle_samples) and cfg.handle_samples >= 100, "handle_samples must be >= 100")
    _require(_is_real(cfg.ray_margin) and cfg.ray_margin > 0, "ray_margin must be positive")
    return cfg


def load_config(path):
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    return parse_config(data)


def _profiles(cfg):
    p = default_profiles(epsilon=cfg.resolved_epsilon(), delta=cfg.delta)
    if cfg.mu == "search":
        return replace(p, mu=search_mu(p, cfg.n, seed=cfg.seed))
    return replace(p, mu=float(cfg.mu))


def _build(cfg, gauge_k=0):
    p = _profiles(cfg)
    if cfg.scenario == "A":
        return build_scenario_A(cfg.n, p, gauge_k=gauge_k)
    return build_scenario_B(cfg.n, p)


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(out, name, text):
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def cmd_verify(cfg, out, as_json=False):
    scenario = _build(cfg)
    report = run_all(scenario, seed=cfg.seed, handle_samples=cfg.handle_samples, ray_margin=cfg.ray_margin)
    payload = {"scenario": scenario.to_summary(), "report": report.to_dict()}
    _write(out, "checks.json", _dump(payload))
    if as_json:
        sys.stdout.write(_dump({"passed": report.passed, "failures": [e.name for e in report.failures()],
                                "warnings": report.warnings}))
    else:
        print(report.summary())
        for w in report.warnings:
            print(f"warning: {w}")
    return EXIT_OK if report.passed else EXIT_FAIL


def _gauge_table(results):
    by_k = {}
    for r in results:
        by_k.setdefault(r["gauge_k"], {})[r["loop"]] = r["total_index"]
    rows = []
    for k, idx in by_k.items():
        i1, i2 = idx["sigma1*gamma1"], idx["sigma2*gamma2"]
        rows.append({"k": k, "index_sigma1_gamma1": i1, "index_sigma2_gamma2": i2, "difference": i2 - i1})
    return rows


def cmd_maslov(cfg, out, as_json=False):
    results = []
    ok = True
    for k in cfg.gauge_ks:
        scenario = _build(cfg, gauge_k=k)
        try:
            reports = scenario_indices(scenario)
        except GluingError as exc:
            print(f"gluing inconsistency (gauge {k}): {exc}", file=sys.stderr)
            _write(out, "maslov.json", _dump({"error": str(exc), "junctions": exc.mismatches}))
            return EXIT_FAIL
        for loop_name, rep in sorted(reports.items()):
            expected = scenario.expected["loops"][loop_name]
            match = rep.total_index == expected
            ok &= match
            entry = rep.to_dict()
            entry["expected_index"] = expected
            entry["matches"] = match
            results.append(entry)
            for seg, trace in rep.traces.items():
                fname = f"trace_{scenario.name}_k{k}_{loop_name.replace('*', '_').replace('.', '')}_{seg}.csv"
                _write(out, fname, trace.to_csv())
    payload = {"scenario": cfg.scenario, "n": cfg.n, "loops": results, "warnings": scenario.warnings}
    if cfg.scenario == "A" and len(cfg.gauge_ks) > 1:
        payload["gauge_table"] = _gauge_table(results)
    _write(out, "maslov.json", _dump(payload))
    if as_json:
        sys.stdout.write(_dump({"passed": ok, "indices": {f"{r['loop']}@k={r['gauge_k']}": r["total_index"]
                                                          for r in results}}))
    else:
        for r in results:
            flag = "PASS" if r["matches"] else "FAIL"
            print(f"[{flag}] {r['loop']} (k={r['gauge_k']}): index {r['total_index']} "
                  f"(raw {r['total_raw']:.6f}, expected {r['expected_index']})")
        for row in payload.get("gauge_table", []):
            print(f"k={row['k']}: ({row['index_sigma1_gamma1']}, {row['index_sigma2_gamma2']}) "
                  f"difference {row['difference']}")
        for w in payload["warnings"]:
            print(f"warning: {w}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_sweep(cfg, out, as_json=False):
    if not cfg.epsilons:
        raise ConfigError("sweep needs a non-empty 'epsilons' list")
    rows = epsilon_sweep(cfg.n, cfg.epsilons)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon", "winding_gamma5", "deviation"])
        for eps, w, d in rows:
            writer.writerow([repr(eps), repr(w), repr(d)])
    if as_json:
        sys.stdout.write(_dump({"n": cfg.n, "rows": [list(r) for r in rows]}))
    else:
        for eps, w, d in rows:
            print(f"epsilon={eps:g}: winding {w:.8f}, |winding - (1 - n)| = {d:.3e}")
    return EXIT_OK


COMMANDS = {"verify": cmd_verify, "maslov": cmd_maslov, "sweep": cmd_sweep}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON config file")
    common.add_argument("--out", type=str, default="handlemaslov-out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="override the config's RNG seed")
    common.add_argument("--json", action="store_true", help="machine-readable summary on stdout")
    parser = argparse.ArgumentParser(prog="handlemaslov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="structural and geometric checks")
    sub.add_parser("maslov", parents=[common], help="loop Maslov indices and phase traces")
    sub.add_parser("sweep", parents=[common], help="winding of the handle path versus epsilon")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative")
            cfg = replace(cfg, seed=args.seed)
        return COMMANDS[args.command](cfg, Path(args.out), args.json)
    except (ConfigError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConstructionError, ParameterError) as exc:
        print(f"invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

