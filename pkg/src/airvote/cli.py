"""Command-line client for the analytics service.

Every subcommand builds a request, sends it through an HTTP client, and
formats the response.  By default the request is served by an in-process
application instance (no network, fully offline and deterministic); pass
``--server URL`` to target a running ``airvote serve`` instead.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime or capacity
error.

CSV outputs start with a one-line ``#`` manifest (tool version, config
hash, master seed); re-running a command with the same manifest reproduces
byte-identical data rows.  A machine-readable copy of the manifest is
written next to the CSV as ``<out>.manifest.json``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import httpx

from . import __version__
from .config import default_seed, load_config, sweep_presets, train_presets
from .errors import ConfigError
from .learning import METRIC_COLUMNS
from .montecarlo import CSV_COLUMNS

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems as config errors."""

    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def make_client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    # In-process ASGI transport: keeps the CLI usable offline and byte-
    # deterministic while still exercising the exact service surface.
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service import create_app

    return TestClient(create_app())


def _post(client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code in (400, 422):
        raise ConfigError(_detail(response))
    if response.status_code != 200:
        raise RuntimeError(_detail(response))
    return response.json()


def _detail(response) -> str:
    try:
        detail = response.json().get("detail")
    except ValueError:
        detail = None
    if isinstance(detail, list):  # schema validation issues
        parts = []
        for item in detail:
            loc = ".".join(str(x) for x in item.get("loc", []) if x != "body")
            parts.append(f"{loc}: {item.get('msg', '')}")
        return "invalid request: " + "; ".join(parts)
    return str(detail or f"request failed with status {response.status_code}")


def _print_kv(data: dict, keys, as_json: bool) -> None:
    if as_json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return
    for key in keys:
        value = data.get(key)
        if value is None:
            continue
        if isinstance(value, float):
            print(f"{key} {value:.6g}")
        else:
            print(f"{key} {value}")


def _manifest_line(manifest: dict) -> str:
    fields = [
        f"airvote={manifest['version']}",
        f"kind={manifest['kind']}",
    ]
    if manifest.get("preset"):
        fields.append(f"preset={manifest['preset']}")
    fields.append(f"seed={manifest['master_seed']}")
    if manifest.get("trials") is not None:
        fields.append(f"trials={manifest['trials']}")
    fields.append(f"config_sha256={manifest['config_sha256']}")
    return "# " + " ".join(fields)


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: str, manifest: dict, columns, rows) -> None:
    """CSV with a leading manifest comment; column order is fixed."""
    lines = [_manifest_line(manifest), ",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(path + ".manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _config_payload(path: str | None) -> dict | None:
    if path is None:
        return None
    return load_config(path).as_dict()


# --- subcommands -------------------------------------------------------------

def _cmd_snr(args, client) -> int:
    geometry_flags = [args.alpha, args.ratio, args.R_m, args.r0_m]
    geometry_only = any(v is not None for v in geometry_flags) and args.K is None
    cell = {}
    if args.ratio is not None:
        r0 = args.r0_m if args.r0_m is not None else 10.0
        cell = {"r0_m": r0, "R_m": args.ratio * r0}
    else:
        if args.R_m is not None:
            cell["R_m"] = args.R_m
        if args.r0_m is not None:
            cell["r0_m"] = args.r0_m
    if args.alpha is not None:
        cell["alpha"] = args.alpha
    if args.N0_dBm is not None:
        cell["N0_dBm"] = args.N0_dBm
    if args.P_dBW is not None:
        cell["P_dBW"] = args.P_dBW
    payload = {"cell": cell, "seed": args.seed if args.seed is not None else default_seed()}
    if geometry_only:
        payload["K"] = None
        payload["mc_draws"] = args.mc_draws or 0
    else:
        if args.K is not None:
            payload["K"] = args.K
        payload["mc_draws"] = args.mc_draws if args.mc_draws is not None else 10_000
    if args.p_loc is not None:
        payload["p_loc"] = args.p_loc
    data = _post(client, "/snr", payload)
    if data.get("alpha_flagged"):
        print("warning: path-loss exponent outside the typical (2, 4) range", file=sys.stderr)
    keys = (
        "nsnr",
        "nsnr_noise_free",
        "e_sqrt_path_loss",
        "e_path_loss",
        "snr_d",
        "K_eff",
        "nsnr_mc",
        "nsnr_mc_se",
    )
    _print_kv(data, keys, args.json)
    if not args.json and data.get("nsnr_mc") is not None:
        print(f"note {data['note']}")
    return EXIT_OK


def _cmd_failprob(args, client) -> int:
    payload: dict = {"scheme": args.scheme}
    cfg = _config_payload(args.config)
    if cfg is not None:
        payload["config"] = cfg
    if args.trials is not None:
        payload["trials"] = args.trials
    payload["seed"] = args.seed if args.seed is not None else default_seed()
    if args.threads is not None:
        payload["threads"] = args.threads
    data = _post(client, "/failprob", payload)["record"]
    _print_kv(data, CSV_COLUMNS, args.json)
    return EXIT_OK


def _cmd_sweep(args, client) -> int:
    payload: dict = {"threads": args.threads}
    if args.preset:
        payload["preset"] = args.preset
    else:
        if not (args.axis and args.values and args.schemes):
            raise ConfigError("sweep needs --preset or --axis/--values/--schemes")
        payload["axis"] = args.axis
        payload["values"] = [float(v) for v in args.values.split(",")]
        payload["schemes"] = args.schemes.split(",")
        cfg = _config_payload(args.config)
        if cfg is not None:
            payload["config"] = cfg
    if args.trials is not None:
        payload["trials"] = args.trials
    payload["seed"] = args.seed if args.seed is not None else default_seed()
    data = _post(client, "/sweep", payload)
    records = data["records"]
    write_csv(args.out, data["manifest"], CSV_COLUMNS, records)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_relay_bench(args, client) -> int:
    payload = {
        "C": args.C,
        "L": args.L,
        "instances": args.instances,
        "seed": args.seed if args.seed is not None else default_seed(),
    }
    data = _post(client, "/relay-bench", payload)
    if args.json:
        print(json.dumps(data, indent=2, sort_keys=True))
        return EXIT_OK
    header = f"{'selector':<18} {'mean_objective':>14} {'frac_optimal':>12} {'mean_gap':>10} {'max_gap':>10}"
    print(header)
    for row in data["rows"]:
        print(
            f"{row['selector']:<18} {row['mean_objective']:>14.6f} "
            f"{row['frac_optimal']:>12.4f} {row['mean_gap_to_exhaustive']:>10.6f} "
            f"{row['max_gap_to_exhaustive']:>10.6f}"
        )
    print(f"sandwich_violations {data['sandwich_violations']}")
    return EXIT_OK


def _cmd_train(args, client) -> int:
    payload: dict = {"include_metrics": True}
    if args.preset:
        payload["preset"] = args.preset
    else:
        cfg = _config_payload(args.config)
        if cfg is not None:
            payload["config"] = cfg
    if args.schemes:
        payload["schemes"] = args.schemes.split(",")
    if args.seeds:
        payload["seeds"] = [int(s) for s in args.seeds.split(",")]
    data = _post(client, "/train", payload)
    manifest = data["manifest"]
    runs = data["runs"]
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        for run in runs:
            path = os.path.join(args.out_dir, f"train_{run['scheme']}_{run['seed']}.csv")
            write_csv(path, manifest, METRIC_COLUMNS, run["metrics"])
    elif args.out:
        if len(runs) != 1:
            raise ConfigError("--out holds a single run; use --out-dir for comparisons")
        write_csv(args.out, manifest, METRIC_COLUMNS, runs[0]["metrics"])
    print(f"{'scheme':<24} {'seed':>6} {'final_test_acc':>15} {'final_train_loss':>17}")
    for run in runs:
        print(
            f"{run['scheme']:<24} {run['seed']:>6} {run['final_test_accuracy']:>15.4f} "
            f"{run['final_train_loss']:>17.6f}"
        )
    return EXIT_OK


def _cmd_validate(args, client) -> int:
    seed = args.seed if args.seed is not None else 0
    data = _post(client, "/validate", {"seed": seed})
    for result in data["results"]:
        status = "PASS" if result["passed"] else "FAIL"
        print(f"{status} {result['name']} ({result['detail']})")
    if not data["all_passed"]:
        print("validation failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_serve(args, client) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="airvote", description=__doc__)
    parser.add_argument("--version", action="version", version=f"airvote {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--server", help="base URL of a running service (default: in-process)")
        p.add_argument("--seed", type=int, default=None, help="master seed (env AIRVOTE_SEED overrides the default)")
        p.add_argument("--json", action="store_true", help="print the raw JSON response")

    p = sub.add_parser("snr", help="closed-form and Monte Carlo normalized detection SNR")
    add_common(p)
    p.add_argument("--alpha", type=float, default=None, help="path-loss exponent")
    p.add_argument("--ratio", type=float, default=None, help="cell radius over reference distance")
    p.add_argument("--R-m", dest="R_m", type=float, default=None)
    p.add_argument("--r0-m", dest="r0_m", type=float, default=None)
    p.add_argument("--P-dBW", dest="P_dBW", type=float, default=None)
    p.add_argument("--N0-dBm", dest="N0_dBm", type=float, default=None)
    p.add_argument("--K", type=int, default=None, help="user count (enables finite-population terms)")
    p.add_argument("--p-loc", dest="p_loc", type=float, default=None)
    p.add_argument("--mc-draws", dest="mc_draws", type=int, default=None)
    p.set_defaults(func=_cmd_snr)

    p = sub.add_parser("failprob", help="single-point Monte Carlo failure probability")
    add_common(p)
    p.add_argument("--config", help="experiment config file (YAML)")
    p.add_argument("--scheme", default="aircomp_pc",
                   help="ideal | aircomp_pc | cluster-<selector>")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=_cmd_failprob)

    p = sub.add_parser("sweep", help="grid sweep with CSV output")
    add_common(p)
    p.add_argument("--preset", choices=sorted(sweep_presets()), default=None)
    p.add_argument("--config", help="experiment config file (YAML)")
    p.add_argument("--axis", default=None, help="swept parameter name")
    p.add_argument("--values", default=None, help="comma-separated grid values")
    p.add_argument("--schemes", default=None, help="comma-separated scheme labels")
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("relay-bench", help="compare relay-selection backends on random instances")
    add_common(p)
    p.add_argument("--C", type=int, required=True, help="cluster count")
    p.add_argument("--L", type=int, required=True, help="relays per cluster")
    p.add_argument("--instances", type=int, default=1000)
    p.set_defaults(func=_cmd_relay_bench)

    p = sub.add_parser("train", help="end-to-end sign-vote training on the synthetic task")
    add_common(p)
    p.add_argument("--preset", choices=sorted(train_presets()), default=None)
    p.add_argument("--config", help="experiment config file (YAML)")
    p.add_argument("--schemes", default=None, help="comma-separated scheme labels")
    p.add_argument("--seeds", default=None, help="comma-separated training seeds")
    p.add_argument("--out", default=None, help="metrics CSV (single run)")
    p.add_argument("--out-dir", default=None, help="directory for per-run metrics CSVs")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("validate", help="run the oracle cross-check suite")
    add_common(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve, server=None)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "serve":
            return args.func(args, None)
        with make_client(args.server) as client:
            return args.func(args, client)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, httpx.HTTPError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
