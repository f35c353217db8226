"""Command-line surface: validate, certify, verify, gain, riccati, simulate.

Every run emits exactly one JSON report on stdout (optionally duplicated
to a file) and exits with a stable code:

    0  success / feasible
    1  internal error
    2  invalid input or hypothesis violation
    3  undecided up to the requested bound
    4  contractiveness ruled out along the requested window
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time

import numpy as np

from . import __version__, analysis, lmi, riccati
from .lmi import (
    MARGIN_THRESHOLD,
    AllInfeasible,
    GainBoundExceeded,
    PositivityError,
)
from .model import SystemFormatError, load_system, validate_system
from .operators import PD_TOL, NotContractiveAtHorizon

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2
EXIT_UNDECIDED = 3
EXIT_NOT_CONTRACTIVE = 4


def _digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _emit(report: dict, args) -> None:
    started = getattr(args, "_started", None)
    if started is not None:
        report["timings"] = {"total_s": round(time.perf_counter() - started, 6)}
    text = json.dumps(report, indent=2, default=_jsonable)
    print(text)
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def _base_report(args, command: str) -> dict:
    return {
        "tool": "smjls",
        "version": __version__,
        "command": command,
        "inputs": {"system": args.file, "sha256": _digest(args.file)},
        "backend": "cvxpy:CLARABEL",
        "tolerances": {
            "margin_threshold": getattr(args, "margin", MARGIN_THRESHOLD),
            "row_sum": 1e-9,
            "pd_tol": PD_TOL,
        },
    }


def _findings_payload(report) -> list[dict]:
    return [
        {"severity": f.severity, "code": f.code, "message": f.message}
        for f in report.findings
    ]


def cmd_validate(args) -> int:
    out = _base_report(args, "validate")
    system = load_system(args.file)
    report = validate_system(system)
    out["outcome"] = {
        "ok": report.ok,
        "positivity_hypothesis": report.positivity_hypothesis,
        "findings": _findings_payload(report),
        "dimensions": {"N": system.N, "J": system.J, "n": system.n,
                       "m": system.m, "p": system.p},
    }
    _emit(out, args)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_certify(args) -> int:
    out = _base_report(args, "certify")
    system = load_system(args.file)
    result = lmi.certify(system, args.kind, args.max_window, args.margin)
    if isinstance(result, AllInfeasible):
        out["outcome"] = {
            "feasible": False,
            "detail": result.detail,
            "conclusive": result.conclusive,
            "records": [
                {"M": r.M, "status": r.status, "best_margin": r.best_margin}
                for r in result.records
            ],
        }
        _emit(out, args)
        return EXIT_UNDECIDED
    M, cert = result
    verification = lmi.verify_certificate(system, cert)
    out["outcome"] = {
        "feasible": True,
        "M": M,
        "eta": cert.eta,
        "rho": cert.rho,
        "nu": cert.nu,
        "c": cert.c,
        "lambda": cert.lam,
        "verified": verification.ok,
        "max_block_eig": verification.max_block_eig,
        "x_lower_bound": cert.solver.get("x_lower_bound"),
    }
    if args.out:
        lmi.save_certificate(cert, args.out)
        out["outcome"]["certificate"] = args.out
    _emit(out, args)
    return EXIT_OK


def cmd_verify(args) -> int:
    out = _base_report(args, "verify")
    out["inputs"]["certificate"] = args.cert
    out["inputs"]["certificate_sha256"] = _digest(args.cert)
    system = load_system(args.file)
    cert = lmi.load_certificate(args.cert)
    report = lmi.verify_certificate(system, cert)
    out["outcome"] = {
        "ok": report.ok,
        "max_block_eig": report.max_block_eig,
        "worst_block": {"mode": report.worst_block[0], "word": list(report.worst_block[1])},
        "min_x_eig": report.min_x_eig,
        "eta": report.eta,
        "rho": report.rho,
        "nu": report.nu,
        "c": report.c,
        "lambda": report.lam,
    }
    _emit(out, args)
    return EXIT_OK if report.ok else EXIT_INVALID


def cmd_gain(args) -> int:
    out = _base_report(args, "gain")
    out["tolerances"]["bisection_tol"] = args.tol
    out["tolerances"]["gamma_max"] = args.gamma_max
    system = load_system(args.file)
    try:
        result = lmi.gain_bisection(
            system, args.window, tol=args.tol, gamma_max=args.gamma_max,
            margin=args.margin,
        )
    except GainBoundExceeded as exc:
        out["outcome"] = {"gamma": None, "detail": str(exc)}
        _emit(out, args)
        return EXIT_UNDECIDED
    out["outcome"] = {
        "gamma": result.gamma,
        "window_length": args.window,
        "probes": [[g, ok] for g, ok in result.probes],
    }
    if args.out:
        lmi.save_certificate(result.certificate, args.out)
        out["outcome"]["certificate"] = args.out
    _emit(out, args)
    return EXIT_OK


def cmd_riccati(args) -> int:
    out = _base_report(args, "riccati")
    out["tolerances"]["epsilon"] = args.epsilon
    system = load_system(args.file)
    window = tuple(int(s) for s in args.window.split(","))
    solution = riccati.riccati_backward(system, window, args.horizon, args.epsilon)
    out["outcome"] = {
        "horizon": solution.horizon,
        "epsilon": solution.epsilon,
        "w_min_eig": solution.w_min_eig,
        "final_min_eig": float(
            min(np.linalg.eigvalsh(solution.table[i, 0])[0] for i in range(system.N))
        ),
        "final_max_eig": float(
            max(np.linalg.eigvalsh(solution.table[i, 0])[-1] for i in range(system.N))
        ),
    }
    if args.out:
        doc = [
            {"mode": i + 1, "k": k, "matrix": solution.table[i, k].tolist()}
            for i in range(system.N)
            for k in range(solution.horizon + 2)
        ]
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2)
        out["outcome"]["table"] = args.out
    _emit(out, args)
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _base_report(args, "simulate")
    system = load_system(args.file)
    seed = args.seed if args.seed is not None else analysis._fresh_seed()
    window = tuple(int(s) for s in args.window.split(",")) if args.window else None
    out["seed"] = seed
    if args.trials <= 1:
        traj = analysis.simulate(
            system, window, horizon=args.horizon,
            disturbance=args.disturbance, sigma=args.sigma, seed=seed,
        )
        out["outcome"] = {
            "trials": 1,
            "window": list(traj.window),
            "residual": traj.residual(system),
            "final_state_norm": float(np.linalg.norm(traj.x[-1])),
        }
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(traj.to_csv(system))
            out["outcome"]["trajectory"] = args.out
    elif args.disturbance == "white":
        est = analysis.estimate_gain(
            system, window, trials=args.trials, horizon=args.horizon,
            sigma=args.sigma, seed=seed,
        )
        out["outcome"] = {
            "trials": est.trials,
            "window": list(est.window[:20]),
            "mean_square_gain": est.mean_square_ratio,
            "std_error": est.std_error,
        }
    else:
        if window is None:
            rng = np.random.default_rng(seed)
            from .switching import random_window

            window = random_window(system.switching, system.J, args.horizon, rng)
        fit = analysis.estimate_decay(
            system, window, trials=args.trials, horizon=args.horizon, seed=seed,
        )
        out["outcome"] = {
            "trials": args.trials,
            "window": list(window[:20]),
            "c_hat": fit.c_hat,
            "lambda_hat": fit.lambda_hat,
            "degenerate": fit.degenerate,
        }
    _emit(out, args)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smjls",
        description="Certify and validate switched Markov jump linear systems.",
    )
    parser.add_argument("--version", action="version", version=f"smjls {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file", help="system JSON document")
        p.add_argument("--report", help="also write the JSON report to this path")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap for parallelizable stages")

    p = sub.add_parser("validate", help="parse and validate a system document")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("certify", help="search window lengths for a certificate")
    common(p)
    p.add_argument("--kind", choices=("stability", "brl"), required=True)
    p.add_argument("--max-window", type=int, default=2, dest="max_window")
    p.add_argument("--margin", type=float, default=MARGIN_THRESHOLD)
    p.add_argument("--out", help="write the certificate JSON here")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("verify", help="recheck a certificate against a system")
    common(p)
    p.add_argument("--cert", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gain", help="bisect the certifiable l2 gain")
    common(p)
    p.add_argument("--window", type=int, required=True, help="window length M")
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--gamma-max", type=float, default=1e3, dest="gamma_max")
    p.add_argument("--margin", type=float, default=MARGIN_THRESHOLD)
    p.add_argument("--out", help="write the gain certificate JSON here")
    p.set_defaults(func=cmd_gain)

    p = sub.add_parser("riccati", help="run the backward recursion on a window")
    common(p)
    p.add_argument("--window", required=True, help="comma-separated symbols, length T+1")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--out", help="write the solution table JSON here")
    p.set_defaults(func=cmd_riccati)

    p = sub.add_parser("simulate", help="sample trajectories / estimate decay or gain")
    common(p)
    p.add_argument("--window", help="comma-separated symbols (random if omitted)")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--disturbance", choices=("zero", "white"), default="zero")
    p.add_argument("--out", help="write the trajectory CSV here")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args._started = time.perf_counter()
    try:
        return args.func(args)
    except (SystemFormatError, PositivityError, ValueError) as exc:
        _emit({"tool": "smjls", "version": __version__, "command": args.command,
               "outcome": {"error": str(exc)}}, args)
        return EXIT_INVALID
    except NotContractiveAtHorizon as exc:
        _emit({
            "tool": "smjls", "version": __version__, "command": args.command,
            "outcome": {
                "error": str(exc), "mode": exc.mode, "step": exc.step,
                "min_eigenvalue": exc.min_eigenvalue,
            },
        }, args)
        return EXIT_NOT_CONTRACTIVE
    except OSError as exc:
        print(json.dumps({"outcome": {"error": str(exc)}}))
        return EXIT_INVALID
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"outcome": {"error": f"internal: {exc!r}"}}))
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
