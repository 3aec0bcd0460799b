"""``polar-reach verify MODEL``: reachability of a network-controlled polynomial system.

Exit codes: 0 proved, 1 disproved, 2 unknown (or no property), 3 error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from .modelfile import ModelFileError, parse_model
from .neural_network import NNFormatError
from .ode_flowpipe import ContractionFailure
from .output import FORMATS, emit_flowpipes, parse_projections, write_trajectories
from .verifier import ReachConfig, Verdict, containment_check, run_reachability, sample_initial_states, simulate_many

EXIT_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polar-reach", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("verify", help="compute flowpipes and check the model's property")
    v.add_argument("model", help="model file")
    v.add_argument("--steps", type=int, default=10, help="control steps K (default 10)")
    v.add_argument("--order", type=int, default=4, help="Taylor model order k (default 4)")
    v.add_argument("--bernstein-order", type=int, default=2, help="Bernstein order per neuron (default 2)")
    v.add_argument("--samples", type=int, default=100, help="samples for the Bernstein remainder (default 100)")
    v.add_argument("--flowsteps", type=int, default=10, help="flowpipes per control step N (default 10)")
    v.add_argument("--symbolic", action="store_true", help="keep layer remainders symbolic")
    v.add_argument("--remainder", choices=("sampled", "rigorous"), default="sampled",
                   help="Bernstein remainder estimate (default sampled)")
    v.add_argument("--simulate", type=int, default=0, metavar="N_TRAJ",
                   help="simulate N random trajectories and check containment")
    v.add_argument("--out", default="reach_out", help="output directory (default reach_out)")
    v.add_argument("--format", choices=FORMATS, action="append",
                   help="output format; repeat for several (default csv)")
    v.add_argument("--project", action="append", metavar="A,B",
                   help="projection axes for csv/svg, state names or t; repeatable")
    v.add_argument("--seed", type=int, default=0, help="seed for simulation sampling")
    v.add_argument("--quiet", action="store_true", help="only print the verdict")
    return p


def _fmt_box(box) -> str:
    return " ".join(f"[{b.lo:.6g}, {b.hi:.6g}]" for b in box)


def verify(args: argparse.Namespace) -> int:
    spec = parse_model(args.model)
    model, target = spec.model, spec.target
    cfg = ReachConfig(
        order=args.order, bernstein_order=args.bernstein_order, samples=args.samples,
        flowsteps=args.flowsteps, symbolic=args.symbolic, remainder_mode=args.remainder,
    )
    if args.steps < 1:
        raise ValueError("--steps must be at least 1")
    say = (lambda *a: None) if args.quiet else print

    def progress(i, rng):
        say(f"step {i + 1:3d}/{args.steps}: {_fmt_box(rng)}")

    result = run_reachability(model, args.steps, cfg, target, progress=progress)
    out = Path(args.out)
    trajs = None
    violations = []
    if args.simulate > 0:
        x0s = sample_initial_states(model, args.simulate, args.seed)
        trajs = simulate_many(model, x0s, args.steps)
        violations = containment_check(result, trajs)
        write_trajectories(trajs, out / "trajectories", model.state_names)
        report = out / "containment.txt"
        out.mkdir(parents=True, exist_ok=True)
        lines = [f"trajectories: {len(trajs)}", f"violations: {len(violations)}"]
        lines += [
            f"traj {v.trajectory} t={v.time:.6g} {model.state_names[v.component]}={v.value:.17g} not in {v.enclosure}"
            for v in violations
        ]
        report.write_text("\n".join(lines) + "\n")
        say(f"containment: {len(violations)} violations over {len(trajs)} trajectories")
    projections = parse_projections(result, args.project)
    for fmt in args.format or ["csv"]:
        p = emit_flowpipes(result, out, fmt, projections, trajs)
        say(f"wrote {p}")
    say(f"final range: {_fmt_box(result.final_range)}")
    verdict = result.verdict or Verdict.UNKNOWN
    if target is None:
        print("verdict: unknown (model has no target)")
    else:
        print(f"verdict: {verdict.value}")
    return verdict.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return verify(args)
    except (FileNotFoundError, ModelFileError, NNFormatError, ContractionFailure, ValueError, OSError) as exc:
        print(f"polar-reach: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
