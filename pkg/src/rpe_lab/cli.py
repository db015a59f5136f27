"""Command-line front end: ``rpe-lab <command> ...``.

Exit codes: 0 success, 2 input error, 3 failed internal self-check.
Every command writes a JSON run manifest that ``rpe-lab replay`` re-executes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .circuits import Circuit, CircuitError, controlled_cost, phase_fixed_eigenvectors, prep_circuit, simulate
from .hamiltonians import HamiltonianError, load_hamiltonian, spectrum, to_dense, trace
from .robustness import CONSTRUCTIONS, THIRD_PI, success_region, worker_count
from .rpe import RpeConfig, auto_tau, circular_distance, run_rpe

EXIT_OK, EXIT_INPUT, EXIT_SELFCHECK = 0, 2, 3


class InputError(Exception):
    pass


class SelfCheckFailed(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    inputs: list[dict] = field(default_factory=list)
    seed: int | None = None
    params: dict = field(default_factory=dict)
    version: str = __version__

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(**data)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _input_record(path) -> dict:
    return {"path": str(path), "sha256": _sha256(path)}


def _load(path):
    try:
        return load_hamiltonian(path)
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except HamiltonianError as exc:
        raise InputError(f"{path}: {exc}") from None


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _pair(values, dim):
    a, b = values
    if a == b:
        raise InputError(f"pair indices must differ (both {a})")
    for i in (a, b):
        if not 0 <= i < dim:
            raise InputError(f"pair index {i} out of range for {dim} eigenstates")
    return a, b


def _tau(text, eigenvalues) -> float:
    if text == "auto":
        return auto_tau(eigenvalues)
    try:
        tau = float(text)
    except ValueError:
        raise InputError(f"--tau must be 'auto' or a number, got {text!r}") from None
    if not (math.isfinite(tau) and tau > 0):
        raise InputError("--tau must be finite and positive")
    return tau


def _manifest_path(args, default_stem: str) -> Path:
    if args.manifest:
        return Path(args.manifest)
    out = getattr(args, "out", None)
    return Path(f"{out}.manifest.json" if out else f"{default_stem}.manifest.json")


# ----------------------------------------------------------------------------
# commands


def cmd_spectrum(args, out=sys.stdout):
    h = _load(args.hamiltonian)
    spec = spectrum(h)
    print("index,eigenvalue", file=out)
    for i, e in enumerate(spec.eigenvalues):
        print(f"{i},{_fmt(e)}", file=out)
    print(f"trace,{_fmt(trace(h))}", file=out)
    return {"inputs": [_input_record(args.hamiltonian)], "params": {"n_qubits": h.n_qubits}}


def cmd_rpe(args, out=sys.stdout):
    h = _load(args.hamiltonian)
    spec = spectrum(h)
    pair = _pair(args.pair, spec.dim)
    tau = _tau(args.tau, spec.eigenvalues)
    if args.generations < 1:
        raise InputError("--generations must be >= 1")
    if args.shots is not None and args.shots < 1:
        raise InputError("--shots must be >= 1")
    seed = args.seed if args.shots is not None else None
    config = RpeConfig(pair, args.generations, args.shots, seed, tau)
    result = run_rpe(h, config)
    if config.exact and any(r.degenerate for r in result.records):
        raise SelfCheckFailed("degenerate phase reading in exact mode")
    truth = result.extra["true_theta"]
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.json").write_text(result.to_json() + "\n", encoding="utf-8")
    Path(f"{prefix}.csv").write_text(result.generations_csv(truth), encoding="utf-8")
    print(f"theta_final {_fmt(result.theta_final)}", file=out)
    print(f"energy_difference {_fmt(result.energy_difference())}", file=out)
    return {
        "inputs": [_input_record(args.hamiltonian)],
        "seed": seed,
        "params": {"pair": list(pair), "generations": args.generations, "shots": args.shots, "tau": tau},
    }


def _scaling_trial(task):
    matrix, pair, generations, shots, tau, seed = task
    config = RpeConfig(pair, generations, shots, seed, tau)
    result = run_rpe(matrix, config)
    truth = result.extra["true_theta"]
    return [float(circular_distance(r.theta, truth)) for r in result.records]


def log2_slope(errors: np.ndarray) -> float:
    """Least-squares slope of ``log2(median error)`` against generation index."""
    med = np.median(errors, axis=0)
    if np.any(med <= 0):
        return math.nan
    g = np.arange(med.size)
    return float(np.polyfit(g, np.log2(med), 1)[0])


def run_scaling(matrix, pair, trials, generations, shots, tau, seed, workers=1) -> np.ndarray:
    """Errors per trial and generation; independent seeded streams per trial."""
    if shots is None:
        seeds = [None] * trials
    else:
        seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(trials)]
    tasks = [(matrix, pair, generations, shots, tau, s) for s in seeds]
    if workers > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_scaling_trial, tasks))
    else:
        rows = [_scaling_trial(t) for t in tasks]
    return np.array(rows)


def cmd_scaling(args, out=sys.stdout):
    h = _load(args.hamiltonian)
    spec = spectrum(h)
    pair = _pair(args.pair, spec.dim)
    tau = _tau(args.tau, spec.eigenvalues)
    if args.trials < 1 or args.generations < 1:
        raise InputError("--trials and --generations must be >= 1")
    shots = None if args.exact else args.shots
    if shots is not None and shots < 1:
        raise InputError("--shots must be >= 1")
    errors = run_scaling(to_dense(h), pair, args.trials, args.generations, shots, tau, args.seed, worker_count())
    path = Path(args.out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["trial", "g", "abs_error"])
        for t, row in enumerate(errors):
            for g, e in enumerate(row):
                w.writerow([t, g, _fmt(e)])
    med_final = float(np.median(errors[:, -1]))
    if shots is None:
        print(f"slope exact (max error {_fmt(float(errors.max()))})", file=out)
    else:
        print(f"slope {_fmt(log2_slope(errors))}", file=out)
    print(f"median_final_error {_fmt(med_final)}", file=out)
    return {
        "inputs": [_input_record(args.hamiltonian)],
        "seed": args.seed,
        "params": {"pair": list(pair), "trials": args.trials, "generations": args.generations, "shots": shots, "tau": tau},
    }


def cmd_robustness(args, out=sys.stdout):
    if args.grid < 2:
        raise InputError("--grid must be >= 2")
    if not (math.isfinite(args.max_eps) and args.max_eps >= 0 and 2 * args.max_eps**2 <= 1):
        raise InputError("--max-eps must satisfy 0 <= e and 2 e^2 <= 1")
    grid = success_region(args.grid, args.max_eps, args.construction, worker_count())
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{prefix}.csv").write_text(grid.to_csv(), encoding="utf-8")
    Path(f"{prefix}_contour.csv").write_text(grid.contour_csv(), encoding="utf-8")
    for axis in ("eps_l", "eps_c"):
        p = grid.axis_crossing(axis, THIRD_PI)
        print(f"crossing_{axis} {'none' if p is None else _fmt(p)}", file=out)
    print(f"monotonicity_violations {grid.monotonicity_violations()}", file=out)
    if grid.fallback is not None and grid.fallback.any():
        print(f"dense_fallback_cells {int(grid.fallback.sum())}", file=out)
    return {"params": {"grid": args.grid, "max_eps": args.max_eps, "construction": args.construction}}


def simplify(circuit: Circuit) -> Circuit:
    """Drop gates that act as the identity (zero-angle phases, identity dense blocks)."""
    kept = []
    for g in circuit.gates:
        if g.kind == "PHASE" and math.remainder(g.angle, 2 * math.pi) == 0.0:
            continue
        if g.kind == "DENSE" and np.allclose(g.matrix, np.eye(g.matrix.shape[0]), atol=1e-12):
            continue
        kept.append(g)
    return Circuit(circuit.n_qubits, tuple(kept))


def cmd_prep(args, out=sys.stdout):
    h = _load(args.hamiltonian)
    spec = spectrum(h)
    a, b = _pair(args.pair, spec.dim)
    try:
        circuit = simplify(prep_circuit(spec, a, b, args.beta))
    except CircuitError as exc:
        raise InputError(str(exc)) from None
    vecs = phase_fixed_eigenvectors(spec)
    target = (vecs[:, a] + np.exp(1j * args.beta) * vecs[:, b]) / math.sqrt(2)
    state = simulate(circuit)
    # equality up to a global phase
    overlap = abs(np.vdot(target, state))
    if abs(overlap - 1.0) > 1e-9 or np.linalg.norm(state - np.vdot(target, state) * target) > 1e-9:
        raise SelfCheckFailed(f"prepared state deviates from target (overlap {overlap:.12f})")
    text = circuit.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    return {"inputs": [_input_record(args.hamiltonian)], "params": {"pair": [a, b], "beta": args.beta}}


def cmd_cost(args, out=sys.stdout):
    if args.singles < 0 or args.cnots < 0:
        raise InputError("gate counts must be non-negative")
    print(f"uncontrolled_cnots {args.cnots}", file=out)
    print(f"controlled_cnots_worst_case {controlled_cost(args.singles, args.cnots)}", file=out)
    return {"params": {"singles": args.singles, "cnots": args.cnots}}


def cmd_replay(args, out=sys.stdout):
    try:
        manifest = RunManifest.read(args.manifest_file)
    except (OSError, ValueError, TypeError) as exc:
        raise InputError(f"cannot read manifest: {exc}") from None
    for rec in manifest.inputs:
        if not Path(rec["path"]).exists() or _sha256(rec["path"]) != rec["sha256"]:
            raise InputError(f"input {rec['path']} changed since the recorded run")
    argv = list(manifest.argv)
    if args.out:
        argv = _override(argv, "--out", args.out)
    if args.manifest:
        argv = _override(argv, "--manifest", args.manifest)
    code = main(argv, out=out)
    return code


def _override(argv: list[str], flag: str, value: str) -> list[str]:
    argv = list(argv)
    if flag in argv:
        argv[argv.index(flag) + 1] = value
    else:
        argv += [flag, value]
    return argv


# ----------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rpe-lab", description="Robust phase estimation laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_manifest(p):
        p.add_argument("--manifest", help="where to write the run manifest")
        return p

    p = with_manifest(sub.add_parser("spectrum", help="print eigenvalues and trace"))
    p.add_argument("hamiltonian")

    p = with_manifest(sub.add_parser("rpe", help="run the estimator on one eigenvalue pair"))
    p.add_argument("hamiltonian")
    p.add_argument("--pair", type=int, nargs=2, default=[0, 1], metavar=("A", "B"))
    p.add_argument("--generations", type=int, default=8)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--shots", type=int)
    mode.add_argument("--exact", action="store_true", help="exact probabilities (default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", default="auto")
    p.add_argument("--out", default="rpe_result", help="output prefix for .json and .csv")

    p = with_manifest(sub.add_parser("scaling", help="error versus generation over many trials"))
    p.add_argument("hamiltonian")
    p.add_argument("--pair", type=int, nargs=2, default=[0, 1], metavar=("A", "B"))
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--shots", type=int, default=1024)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--generations", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", default="auto")
    p.add_argument("--out", default="scaling.csv")

    p = with_manifest(sub.add_parser("robustness", help="worst-case success map"))
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--max-eps", type=float, default=0.5)
    p.add_argument("--construction", choices=CONSTRUCTIONS, default="literal")
    p.add_argument("--out", default="robustness")

    p = with_manifest(sub.add_parser("prep", help="emit the eigenstate-superposition preparation circuit"))
    p.add_argument("hamiltonian")
    p.add_argument("--pair", type=int, nargs=2, default=[0, 1], metavar=("A", "B"))
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--out")

    p = with_manifest(sub.add_parser("cost", help="CNOT counts of a circuit and its controlled version"))
    p.add_argument("--singles", type=int, required=True)
    p.add_argument("--cnots", type=int, required=True)

    p = sub.add_parser("replay", help="re-run a recorded manifest")
    p.add_argument("manifest_file")
    p.add_argument("--out", help="override the recorded output location")
    p.add_argument("--manifest", help="override the recorded manifest location")
    return parser


COMMANDS = {
    "spectrum": cmd_spectrum,
    "rpe": cmd_rpe,
    "scaling": cmd_scaling,
    "robustness": cmd_robustness,
    "prep": cmd_prep,
    "cost": cmd_cost,
    "replay": cmd_replay,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        info = COMMANDS[args.command](args, out=out)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SelfCheckFailed as exc:
        print(f"self-check failed: {exc}", file=sys.stderr)
        return EXIT_SELFCHECK
    if args.command == "replay":
        return info
    manifest = RunManifest(args.command, argv, info.get("inputs", []), info.get("seed"), info.get("params", {}))
    manifest.write(_manifest_path(args, args.command))
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
