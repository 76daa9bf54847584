"""Command-line client of the simulation service.

The CLI holds no physics: every subcommand builds a request, sends it
through the HTTP API (in-process by default, or to a remote server via
``--server``) and writes the returned CSV payloads.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import httpx
import yaml

from . import __version__
from .pipeline import SCENARIO_NAMES, THREADS_ENV_VAR, write_files


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server.rstrip("/"), timeout=3600.0)
    # in-process sync portal against the bundled ASGI app; no daemon needed
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DeprecationWarning)
        from starlette.testclient import TestClient
    from .service.app import app
    return TestClient(app)


def _resolve_threads(args) -> int | None:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV_VAR, "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise SystemExit(f"error: bad {THREADS_ENV_VAR} value {env!r}")
    return None


def _load_experiment(path: str | None):
    if path is None:
        return None
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh.read())
    except OSError as exc:
        raise SystemExit(f"error: cannot read config: {exc}")
    except yaml.YAMLError as exc:
        raise SystemExit(f"error: config is not valid YAML: {exc}")
    if not isinstance(doc, dict):
        raise SystemExit("error: config must be a YAML mapping")
    return doc


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        resp = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise SystemExit(f"error: request failed: {exc}")
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise SystemExit(f"error: {detail}")
    return resp.json()


def _write_out(files: dict[str, str], out_dir: str) -> None:
    try:
        paths = write_files(files, out_dir)
    except OSError as exc:
        raise SystemExit(f"error: cannot write outputs: {exc}")
    for p in paths:
        print(f"wrote {p}")


def cmd_simulate(args) -> int:
    if args.scenario == "custom" and args.config is None:
        raise SystemExit("error: scenario 'custom' requires --config")
    payload = {"scenario": args.scenario, "seed": args.seed,
               "threads": _resolve_threads(args),
               "ensemble_size": args.ensemble_size,
               "experiment": _load_experiment(args.config)}
    with _client(args.server) as client:
        data = _post(client, "/api/simulate", payload)
    for row in data["rows"]:
        print(f"P={row['power_w']:g} W  V={100 * row['visibility']:.2f}%  "
              f"entry T={row['mean_entry_temperature_k']:.0f} K  "
              f"counts={row['relative_count_rate']:.3f}  "
              f"visible photons={row['mean_visible_photons']:.2f}")
    _write_out(data["files"], args.out)
    return 0


def cmd_spectrum(args) -> int:
    temps = [float(t) for t in args.temperatures.split(",")] \
        if args.temperatures else None
    payload = {"experiment": _load_experiment(args.config)}
    if temps is not None:
        payload["temperatures_k"] = temps
    with _client(args.server) as client:
        data = _post(client, "/api/spectrum", payload)
    _write_out(data["files"], args.out)
    return 0


def cmd_scan(args) -> int:
    if args.scenario == "custom" and args.config is None:
        raise SystemExit("error: scenario 'custom' requires --config")
    payload = {"scenario": args.scenario, "power_w": args.power,
               "seed": args.seed, "threads": _resolve_threads(args),
               "ensemble_size": args.ensemble_size,
               "experiment": _load_experiment(args.config)}
    with _client(args.server) as client:
        data = _post(client, "/api/scan", payload)
    print(f"P={data['power_w']:g} W  V={100 * data['visibility']:.2f}%")
    _write_out(data["files"], args.out)
    return 0


def cmd_fit(args) -> int:
    rows = []
    try:
        from .heating import load_ion_yield_observations
        for p, v, y, err in load_ion_yield_observations(args.observations):
            rows.append({"power_w": p, "velocity_mps": v, "ion_yield": y,
                         "yield_err": err})
    except (OSError, ValueError) as exc:
        raise SystemExit(f"error: cannot read observations: {exc}")
    payload = {"observations": rows, "seed": args.seed or 0,
               "n_molecules": args.n_molecules,
               "experiment": _load_experiment(args.config)}
    with _client(args.server) as client:
        data = _post(client, "/api/fit", payload)
    print(f"triplet_sigma_cm2={data['sigma_cm2']:.4g}")
    print(f"arrhenius_prefactor_per_s={data['prefactor_per_s']:.4g}")
    print(f"residual={data['residual']:.4g}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service.app import app
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hotfringe",
        description="Thermal-emission decoherence of fullerene matter waves: "
                    "scenario simulation, spectra, fringe scans and the "
                    "heating-parameter fit.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", choices=SCENARIO_NAMES,
                           default="fig4a")
        p.add_argument("--config", metavar="PATH",
                       help="YAML experiment configuration "
                            "(required for scenario 'custom')")
        p.add_argument("--seed", type=int, default=None, metavar="N")
        p.add_argument("--out", default=".", metavar="DIR",
                       help="directory for CSV outputs")
        p.add_argument("--threads", type=int, default=None, metavar="N",
                       help=f"worker threads (default: ${THREADS_ENV_VAR} "
                            "or 1)")
        p.add_argument("--server", default=None, metavar="URL",
                       help="remote service URL (default: run in-process)")
        p.add_argument("--ensemble-size", type=int, default=None, metavar="N",
                       help="override the molecules per power point")

    p = sub.add_parser("simulate", help="run a scenario power sweep")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spectrum", help="export spectral emission rates")
    common(p, scenario=False)
    p.add_argument("--temperatures", metavar="K1,K2,...",
                   help="comma-separated temperatures in K")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("scan", help="export a fringe scan at one power")
    common(p)
    p.add_argument("--power", type=float, default=0.0, metavar="W")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("fit", help="fit heating parameters to ion yields")
    common(p, scenario=False)
    p.add_argument("--observations", required=True, metavar="PATH",
                   help="text rows: power_w velocity_mps yield yield_err")
    p.add_argument("--n-molecules", type=int, default=128, metavar="N")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        if isinstance(exc.code, str):
            print(exc.code, file=sys.stderr)
            return 1
        raise
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
