"""Command-line experiment runner: ``hopsearch {analyze,ctmc,neighborhood,simulate,ingest}``.

Each subcommand reads a flat YAML config (``--config``); any config key can be
overridden with ``--<key> <yaml value>`` or ``--set key=value`` (flags win).
Outputs go to ``<out>/<name>/`` together with a ``manifest.json`` recording
the resolved config and its hash.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import yaml

from . import __version__
from .analytics import (
    BenefitProfile,
    HopTimeParams,
    ReplicationBudgetParams,
    approx_completion_time,
    forward_success_ratio,
    h_beta,
    search_success_closed,
    search_success_expansion,
)
from .ctmc import (
    CtmcParams,
    DEFAULT_STATE_CAP,
    StateSpaceTooLarge,
    build_model,
    expected_absorption_time,
    simulate_absorption,
)
from .metrics import REPORT_FIELDS, build_report, report_dict, write_reports
from .neighborhood import empirical_p_h, neighborhood_profile
from .simulator import ConfigError, SimConfig, parse_scheme, prepare, run
from .trace import (
    SyntheticConfig,
    TraceParseError,
    generate,
    gps_to_contacts,
    parse_contact_trace,
    read_gps_csv,
    write_contact_trace,
)

log = logging.getLogger("hopsearch")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


class DataError(RuntimeError):
    pass


DEFAULTS = {
    "analyze": {"name": "analyze", "alpha": [0.05, 0.15, 0.40], "N": 100, "K": None, "Kp": None},
    "ctmc": {
        "name": "ctmc", "alpha": [0.05, 0.15, 0.40], "h": [1, 2, 3, 4, 5], "N": 20, "lambda": 1.0,
        "cap": DEFAULT_STATE_CAP, "runs": 0,
    },
    "neighborhood": {
        "name": "neighborhood", "trace": None, "synthetic": None, "T": [600.0], "h_max": 6,
        "samples": 500, "alpha": [0.05, 0.15, 0.40], "beta": [0.0005, 0.1],
    },
    "simulate": {
        "name": "simulate", "trace": None, "synthetic": None, "scheme": ["HOP:1", "HOP:2", "HOP:3", "EPID"],
        "stop": ["ORACLE"], "T": [600.0], "seeds": None, "n_contents": 5000,
        "availabilities": [[0.05, 1.0], [0.15, 1.0], [0.40, 1.0]], "query_interval": [10.0, 20.0],
        "buffer_bytes": 10**8, "message_bytes": 15000, "drop_on_satisfied": False,
        "response_same_contact": False, "write_logs": True,
    },
    "ingest": {
        "name": "ingest", "input": None, "kind": "gps", "range_m": 40.0, "step_s": 10.0, "bbox": None,
        "id_map": None,
    },
}


# --- config handling -------------------------------------------------------------------


def load_config(cmd: str, args) -> dict:
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        path = Path(args.config)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except FileNotFoundError as exc:
            raise ConfigError(f"{path}: config file not found") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        for key, value in data.items():
            if key not in cfg and key not in ("seed",):
                raise ConfigError(f"{path}: unknown key {key!r} for {cmd}")
            cfg[key] = value
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        if key not in cfg:
            raise ConfigError(f"--set: unknown key {key!r} for {cmd}")
        cfg[key] = yaml.safe_load(value)
    for key in DEFAULTS[cmd]:
        value = getattr(args, "ov_" + key, None)
        if value is not None:
            cfg[key] = value
    if args.seed is not None:
        cfg["seed"] = args.seed
    cfg.setdefault("seed", 0)
    return cfg


def _as_list(cfg, key):
    v = cfg[key]
    if v is None:
        return None
    out = list(v) if isinstance(v, (list, tuple)) else [v]
    if not out:
        raise ConfigError(f"key {key!r}: sweep list is empty")
    return out


def _out_dir(args, cfg) -> Path:
    d = Path(args.out) / str(cfg["name"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_manifest(out: Path, cmd: str, cfg: dict) -> None:
    resolved = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    manifest = {
        "command": cmd,
        "version": __version__,
        "config": cfg,
        "config_sha256": hashlib.sha256(resolved.encode()).hexdigest(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                                       encoding="utf-8")


def _csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def _load_trace(cfg: dict):
    """(dataset name, trace) from ``trace`` (file) or ``synthetic`` (generator) keys."""
    if cfg.get("trace"):
        spec = cfg["trace"]
        if isinstance(spec, str):
            spec = {"path": spec}
        path = Path(spec["path"])
        if not path.exists():
            raise ConfigError(f"trace.path: {path} does not exist")
        try:
            trace = parse_contact_trace(path, spec.get("format", "interval"), spec.get("id_map"))
        except TraceParseError as exc:
            raise DataError(str(exc)) from exc
        return path.stem, trace
    if cfg.get("synthetic"):
        spec = dict(cfg["synthetic"])
        spec.setdefault("seed", cfg["seed"])
        if "lambda" in spec:
            spec["lam"] = spec.pop("lambda")
        for key in ("area", "speed_range"):
            if key in spec:
                spec[key] = tuple(spec[key])
        try:
            sc = SyntheticConfig(**spec)
        except TypeError as exc:
            raise ConfigError(f"synthetic: {exc}") from exc
        return sc.kind, generate(sc)
    raise ConfigError("one of 'trace' or 'synthetic' is required")


# --- subcommands ---------------------------------------------------------------------


def cmd_analyze(cfg: dict, out: Path, jobs: int = 1) -> Path:
    alphas = _as_list(cfg, "alpha")
    N = int(cfg["N"])
    Ks = _as_list(cfg, "K") or list(range(1, N))
    Kps = _as_list(cfg, "Kp")
    if Kps is not None and len(Kps) != len(Ks):
        raise ConfigError("Kp must be omitted (Kp = K) or match K in length")
    rows = []
    for a in alphas:
        for n, K in enumerate(Ks):
            Kp = Ks[n] if Kps is None else Kps[n]
            p = ReplicationBudgetParams(float(a), N, int(K), int(min(Kp, N - 1)))
            rows.append([float(a), int(K), p.k_return, N, forward_success_ratio(float(a), int(K)),
                         search_success_closed(p), search_success_expansion(p)])
    path = out / "analyze.csv"
    _csv(path, ["alpha", "K", "Kp", "N", "forward", "success_closed", "success_expansion"], rows)
    return path


def ctmc_rows(alphas, hs, N, lam, cap=DEFAULT_STATE_CAP, runs=0, seed=0):
    """Rows (alpha, h, T_h, T_tilde, normalized, error), normalised by each alpha's h=1 value."""
    rows = []
    for a in alphas:
        M = int(math.floor(a * N + 1e-9))
        if M < 1:
            raise ConfigError(f"alpha={a} leaves no tagged node among N={N}")
        hs_all = sorted(set([1] + list(hs)))
        exact, approx = {}, {}
        for h in hs_all:
            params = CtmcParams(N, M, lam, h)
            try:
                exact[h] = expected_absorption_time(build_model(params, cap))
            except StateSpaceTooLarge as exc:
                if runs <= 0:
                    raise ConfigError(f"{exc}; set 'runs' > 0 to fall back to the Monte-Carlo sampler") from exc
                exact[h] = simulate_absorption(params, runs, seed).mean
            approx[h] = approx_completion_time(HopTimeParams(a, lam, h))
        for h in hs:
            norm = exact[h] / exact[1]
            norm_tilde = approx[h] / approx[1]
            rows.append([float(a), int(h), exact[h], approx[h], norm, (norm_tilde - norm) / norm])
    return rows


def cmd_ctmc(cfg: dict, out: Path, jobs: int = 1) -> Path:
    rows = ctmc_rows(_as_list(cfg, "alpha"), [int(h) for h in _as_list(cfg, "h")], int(cfg["N"]),
                     float(cfg["lambda"]), int(cfg["cap"]), int(cfg["runs"]), int(cfg["seed"]))
    path = out / "ctmc.csv"
    _csv(path, ["alpha", "h", "T_h", "T_tilde", "normalized", "error"], rows)
    return path


def cmd_neighborhood(cfg: dict, out: Path, jobs: int = 1) -> Path:
    dataset, trace = _load_trace(cfg)
    h_max = int(cfg["h_max"])
    alphas = _as_list(cfg, "alpha")
    betas = _as_list(cfg, "beta")
    combined, hb_rows = [], []
    for T in _as_list(cfg, "T"):
        prof = neighborhood_profile(trace, float(T), int(cfg["samples"]), h_max, int(cfg["seed"]))
        for a in alphas:
            p = empirical_p_h(prof, float(a))
            rows = [[h + 1, float(prof.means[h]), float(prof.stderr[h]), float(p[h])] for h in range(h_max)]
            cell = out / f"T{float(T):g}_a{float(a):g}"
            cell.mkdir(exist_ok=True)
            _csv(cell / "neighborhood.csv", ["h", "mean_Nh", "stderr", "P_h"], rows)
            combined += [[dataset, float(T), float(a)] + r for r in rows]
            for b in betas:
                hb_rows.append([dataset, float(T), float(a), float(b), h_beta(BenefitProfile(tuple(p), float(b)))])
    _csv(out / "neighborhood.csv", ["dataset", "T", "alpha", "h", "mean_Nh", "stderr", "P_h"], combined)
    _csv(out / "h_beta.csv", ["dataset", "T", "alpha", "beta", "h_beta"], hb_rows)
    return out / "neighborhood.csv"


REPORT_KEYS = ["dataset", "scheme", "stop", "alpha", "T", "h", "seed"]


def _sim_cell(job):
    dataset, trace, sc, cell_dir, write_logs = job
    own, work = prepare(trace, sc)
    res = run(trace, sc, work, own)
    if write_logs:
        cell_dir.mkdir(parents=True, exist_ok=True)
        res.write_log(cell_dir / "events.csv")
        res.write_summary(cell_dir / "queries.csv")
    rows = []
    for a, _ in sc.availabilities:
        if not any(q.alpha == a for q in res.queries):
            continue
        row = report_dict(build_report(res, a))
        row.update(dataset=dataset, scheme=sc.scheme, stop=sc.stop, alpha=a, T=sc.t_forward,
                   h="" if sc.scheme == "EPID" else sc.h, seed=sc.seed)
        rows.append(row)
    return rows


def simulate_jobs(cfg: dict, out: Path):
    dataset, trace = _load_trace(cfg)
    seeds = _as_list(cfg, "seeds") or [int(cfg["seed"])]
    schemes = [parse_scheme(str(s)) for s in _as_list(cfg, "scheme")]
    jobs = []
    for T, (scheme, h), stop, seed in product(_as_list(cfg, "T"), schemes, _as_list(cfg, "stop"), seeds):
        sc = SimConfig(
            scheme=scheme, h=h, stop=str(stop), t_forward=float(T), n_contents=int(cfg["n_contents"]),
            availabilities=tuple(tuple(x) for x in cfg["availabilities"]),
            query_interval=tuple(cfg["query_interval"]), buffer_bytes=int(cfg["buffer_bytes"]),
            message_bytes=int(cfg["message_bytes"]), drop_on_satisfied=bool(cfg["drop_on_satisfied"]),
            response_same_contact=bool(cfg["response_same_contact"]), record_log=bool(cfg["write_logs"]),
            seed=int(seed),
        )
        key = f"T{float(T):g}_{sc.label}_{sc.stop}_s{int(seed)}"
        jobs.append((dataset, trace, sc, out / key, bool(cfg["write_logs"])))
    return jobs


def cmd_simulate(cfg: dict, out: Path, jobs: int = 1) -> Path:
    cells = simulate_jobs(cfg, out)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sim_cell, cells))
    else:
        results = [_sim_cell(c) for c in cells]
    rows = [r for cell_rows in results for r in cell_rows]
    path = out / "report.csv"
    write_reports(rows, path, REPORT_KEYS)
    return path


def cmd_ingest(cfg: dict, out: Path, jobs: int = 1) -> Path:
    if not cfg.get("input"):
        raise ConfigError("'input' is required")
    src = Path(cfg["input"])
    if not src.exists():
        raise ConfigError(f"input: {src} does not exist")
    kind = cfg["kind"]
    try:
        if kind == "gps":
            bbox = tuple(cfg["bbox"]) if cfg.get("bbox") else None
            trace = gps_to_contacts(read_gps_csv(src, bbox), float(cfg["range_m"]), float(cfg["step_s"]))
        elif kind in ("interval", "event"):
            trace = parse_contact_trace(src, kind, cfg.get("id_map"))
        else:
            raise ConfigError(f"kind: unknown input kind {kind!r}")
    except TraceParseError as exc:
        raise DataError(str(exc)) from exc
    path = out / "trace.csv"
    write_contact_trace(trace, path)
    return path


COMMANDS = {
    "analyze": cmd_analyze,
    "ctmc": cmd_ctmc,
    "neighborhood": cmd_neighborhood,
    "simulate": cmd_simulate,
    "ingest": cmd_ingest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hopsearch", description="Hop-limited opportunistic search experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", default="out")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--set", action="append", metavar="KEY=VALUE")
        for key in DEFAULTS[name]:
            p.add_argument(f"--{key}", dest="ov_" + key, type=yaml.safe_load, metavar="YAML")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.command, args)
        out = _out_dir(args, cfg)
        write_manifest(out, args.command, cfg)
        path = COMMANDS[args.command](cfg, out, max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KeyError, TypeError) as exc:
        print(f"config error: bad or missing key {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceParseError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
