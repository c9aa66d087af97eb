"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 certification
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import CertificationError, DivergenceError, ScenarioError, SeaRobustError, SynthesisError
from .scenario import certificate_document, parse_scenario, write_outputs
from .sim import builtin_campaigns, campaign, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_CERTIFICATION = 4

log = logging.getLogger("searobust")


def load_target(target: str):
    """A built-in campaign name, or the path of a JSON scenario file."""
    names = {sc.name for sc in builtin_campaigns()}
    if target in names:
        return campaign(target)
    return parse_scenario(target)


def _run_one(target: str, out_dir: str, decimate: int, metrics_only: bool) -> tuple[str, int, str]:
    try:
        scenario = load_target(target)
        result = run(scenario)
        write_outputs(result, out_dir, decimate, metrics_only)
    except DivergenceError as exc:
        return target, EXIT_DIVERGENCE, f"divergence: {exc}"
    except (CertificationError, SynthesisError) as exc:
        return target, EXIT_CERTIFICATION, f"certification failed: {exc}"
    except (SeaRobustError, ValueError, OSError) as exc:
        return target, EXIT_CONFIG, f"configuration error: {exc}"
    if not all(c.valid for c in result.certificates):
        return target, EXIT_CERTIFICATION, "certification failed: invalid Lyapunov certificate"
    return target, EXIT_OK, f"{scenario.name}: ok ({result.metrics['runtime_s']:.2f} s) -> {out_dir}"


def cmd_run(args) -> int:
    if args.decimate < 1:
        print("configuration error: --decimate must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    jobs = []
    for target in args.targets:
        sub = out if len(args.targets) == 1 else out / Path(target).stem
        jobs.append((target, str(sub), args.decimate, args.metrics_only))
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_run_one, *zip(*jobs)))
    else:
        outcomes = [_run_one(*job) for job in jobs]
    code = EXIT_OK
    for _, status, message in outcomes:
        print(message, file=sys.stdout if status == EXIT_OK else sys.stderr)
        code = max(code, status)
    return code


def cmd_list(args) -> int:
    for sc in builtin_campaigns():
        kinds = "/".join(sorted({m.kind for m in sc.modes}))
        print(f"{sc.name}\t{sc.n} joints\t{kinds}\t{sc.duration:g} s")
    return EXIT_OK


def cmd_certify(args) -> int:
    try:
        scenario = load_target(args.scenario)
        certificates = scenario.controller().certificates
    except (CertificationError, SynthesisError) as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_CERTIFICATION
    except (SeaRobustError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.json:
        print(json.dumps(certificate_document(scenario, certificates), indent=2))
    else:
        for i, (mode, cert) in enumerate(zip(scenario.modes, certificates)):
            status = "valid" if cert.valid else "INVALID"
            print(f"joint {i} ({mode.kind}): {status}  residual={cert.residual_norm:.3e}  "
                  f"min eig P={cert.p_min_eig:.4e}  min eig Q={cert.q_min_eig:.4e}")
    return EXIT_OK if all(c.valid for c in certificates) else EXIT_CERTIFICATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="searobust", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate scenarios or built-in campaigns")
    p.add_argument("targets", nargs="+", metavar="SCENARIO", help="scenario.json or campaign name")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--decimate", type=int, default=1, help="keep every N-th telemetry row")
    p.add_argument("--metrics-only", action="store_true", help="skip telemetry.csv")
    p.add_argument("--jobs", type=int, default=1, help="run several targets in parallel")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("list-campaigns", help="list built-in campaigns")
    p.set_defaults(func=cmd_list)

    p = sub.add_parser("certify", help="print Lyapunov certificates without simulating")
    p.add_argument("scenario", help="scenario.json or campaign name")
    p.add_argument("--json", action="store_true", help="print the certificate document as JSON")
    p.set_defaults(func=cmd_certify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
