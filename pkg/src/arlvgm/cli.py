"""Command-line interface: ``arlvgm {simulate,identify,score}``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .covariance import DataMatrix, DegenerateDataError, estimate_lags, log_returns, read_csv, write_csv
from .ipm import SolverError
from .model import assemble_joint, mean_magnitude, partial_coherence, spectral_errors, write_coherence, write_curves
from .scoring import RegPath, SweepConfig, complexity, reference_spectrum, score_solution, sweep
from .serialize import model_from_json, model_to_json, read_json, write_json
from .simulate import TrueModel, gen_model, sample
from .slsolve import StructureRecoveryError
from .specpoly import FreqGrid

logger = logging.getLogger("arlvgm")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    n: int = 1
    path: Optional[RegPath] = None
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: Optional[int] = None
    options: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.n < 0:
            raise ConfigError("order n must be nonnegative")
        if self.sweep.grid_size < 2 * self.n + 2:
            raise ConfigError("grid size must be at least 2n + 2")
        if self.sweep.bartlett_M is not None and self.sweep.bartlett_M < 0:
            raise ConfigError("Bartlett window must be nonnegative")
        for name, p in self.inputs.items():
            if p is not None and not Path(p).is_file():
                raise FileNotFoundError(f"{name} file not found: {p}")


# --------------------------------------------------------------------------
# argument parsing


def _parse_pairs(text: str) -> RegPath:
    pts = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            a, b = item.split(":")
            pts.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"path entry {item!r} is not of the form lam:gamma") from None
    return RegPath(tuple(pts))


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=1, help="AR order")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--rank-tol", type=float, default=None)
    p.add_argument("--zero-tol", type=float, default=None)
    p.add_argument("--grid", type=int, default=512, help="frequency grid size")
    p.add_argument("--bartlett-M", type=int, default=None, help="Bartlett window (default ceil(N^(1/3)))")
    p.add_argument("--score", choices=["product", "additive"], default="product")
    p.add_argument("--alpha", type=float, default=None, help="additive score weight (default 1/N)")
    p.add_argument("--no-demean", action="store_true")
    p.add_argument("--returns", action="store_true", help="input holds prices; use percent log returns")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arlvgm", description="AR latent-variable graphical model identification")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ps = sub.add_parser("simulate", help="draw a random true model and sample data")
    ps.add_argument("--m", type=int, default=15)
    ps.add_argument("--l", type=int, default=1)
    ps.add_argument("--n", type=int, default=1)
    ps.add_argument("--N", type=int, default=500)
    ps.add_argument("--edge-density", type=float, default=0.1)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--burn-in", type=int, default=None)
    ps.add_argument("--no-latent", action="store_true", help="same as --l 0")
    ps.add_argument("--model-out", required=True)
    ps.add_argument("--data-out", required=True)

    pi = sub.add_parser("identify", help="sweep a regularization path and select a model")
    pi.add_argument("--data", required=True)
    _add_solver_args(pi)
    pi.add_argument("--path", type=str, default=None, help="explicit 'lam:gamma,lam:gamma,...'")
    pi.add_argument("--lam-range", type=float, nargs=2, default=(0.1, 10.0))
    pi.add_argument("--gamma-range", type=float, nargs=2, default=(0.1, 10.0))
    pi.add_argument("--lam-gamma-range", type=float, nargs=2, default=None,
                    help="grid in lam*gamma instead of gamma")
    pi.add_argument("--n-lam", type=int, default=5)
    pi.add_argument("--n-gamma", type=int, default=5)
    pi.add_argument("--no-latent", action="store_true", help="sparse-only model (l = 0)")
    pi.add_argument("--workers", type=int, default=1)
    pi.add_argument("--truth", default=None, help="true model JSON for error curves")
    pi.add_argument("--outdir", required=True)

    pc = sub.add_parser("score", help="score a saved model against data")
    pc.add_argument("--model", required=True)
    pc.add_argument("--data", required=True)
    _add_solver_args(pc)
    pc.add_argument("--static", action="store_true",
                    help="compare against the lag-0 covariance (static Gaussian vector)")
    pc.add_argument("--out", default=None)
    return parser


def _sweep_config(args, workers: int = 1, latent: bool = True) -> SweepConfig:
    return SweepConfig(
        tol=args.tol,
        rank_tol=args.rank_tol,
        zero_tol=args.zero_tol,
        grid_size=args.grid,
        bartlett_M=args.bartlett_M,
        score=args.score,
        alpha=args.alpha,
        latent=latent,
        demean=not args.no_demean,
        workers=workers,
    )


def config_from_args(args) -> RunConfig:
    if args.command == "simulate":
        if args.m < 1 or args.N < 2 or args.n < 0:
            raise ConfigError("need m >= 1, N >= 2, n >= 0")
        l = 0 if args.no_latent else args.l
        return RunConfig(
            "simulate",
            outputs={"model": args.model_out, "data": args.data_out},
            n=args.n,
            seed=args.seed,
            options={"m": args.m, "l": l, "N": args.N, "edge_density": args.edge_density, "burn_in": args.burn_in},
        )
    if args.command == "identify":
        if args.path:
            path = _parse_pairs(args.path)
        elif args.lam_gamma_range is not None:
            path = RegPath.log_grid_sparsity(args.lam_range, args.lam_gamma_range, args.n_lam, args.n_gamma)
        else:
            path = RegPath.log_grid(args.lam_range, args.gamma_range, args.n_lam, args.n_gamma)
        return RunConfig(
            "identify",
            inputs={"data": args.data, "truth": args.truth},
            outputs={"dir": args.outdir},
            n=args.n,
            path=path,
            sweep=_sweep_config(args, args.workers, not args.no_latent),
            options={"returns": args.returns},
        )
    return RunConfig(
        "score",
        inputs={"data": args.data, "model": args.model},
        outputs={"report": args.out},
        n=args.n,
        sweep=_sweep_config(args),
        options={"returns": args.returns, "static": args.static},
    )


# --------------------------------------------------------------------------
# commands


def _load_data(path, returns: bool) -> DataMatrix:
    try:
        data = read_csv(path)
        return log_returns(data) if returns else data
    except ValueError as exc:
        # malformed or unusable input file
        raise OSError(str(exc)) from None


def cmd_simulate(cfg: RunConfig) -> dict:
    o = cfg.options
    model = gen_model(o["m"], o["l"], cfg.n, o["edge_density"], cfg.seed)
    data = sample(model, o["N"], burn_in=o["burn_in"], seed=cfg.seed)
    model.save(cfg.outputs["model"])
    write_csv(cfg.outputs["data"], data)
    return {"edges": len(model.edges()), "l": model.l, "spectral_radius": model.spectral_radius()}


def dot_graph(E, l: int, labels: Sequence[str]) -> str:
    """Undirected graph with ``m + l`` nodes; each latent node links to every manifest node."""
    lines = ["graph G {"]
    m = E.m
    for k in range(m):
        lines.append(f'  "{labels[k]}";')
    for a in range(l):
        lines.append(f'  "z{a + 1}" [shape=box];')
    for k, h in E.sorted_pairs():
        lines.append(f'  "{labels[k]}" -- "{labels[h]}";')
    for a in range(l):
        for k in range(m):
            lines.append(f'  "z{a + 1}" -- "{labels[k]}" [style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def cmd_identify(cfg: RunConfig) -> dict:
    data = _load_data(cfg.inputs["data"], cfg.options["returns"])
    outdir = Path(cfg.outputs["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    result = sweep(data, cfg.n, cfg.path, cfg.sweep)
    best = result.best
    grid = FreqGrid(cfg.sweep.grid_size)
    labels = list(data.labels())
    joint = assemble_joint(best.solution)
    C = partial_coherence(joint, grid)
    all_labels = labels + [f"z{a + 1}" for a in range(joint.l)]
    report = result.to_json()
    report["config"] = {
        "tol": cfg.sweep.tol,
        "grid": cfg.sweep.grid_size,
        "bartlett_M": cfg.sweep.bartlett_M,
        "score": cfg.sweep.score,
        "alpha": cfg.sweep.alpha,
        "latent": cfg.sweep.latent,
        "demean": cfg.sweep.demean,
        "returns": cfg.options["returns"],
    }
    write_json(outdir / "sweep.json", report)
    extra = {
        "labels": labels,
        "lambda": best.lam,
        "gamma": best.gamma,
        "D": best.D,
        "p": best.p,
        "f": best.f,
        "N": data.N,
        "certificate": best.certificate,
        "coherence_mean": mean_magnitude(C),
        "coherence_labels": all_labels,
        "score_config": report["config"],
    }
    write_json(outdir / "model.json", model_to_json(best.solution, extra))
    (outdir / "graph.dot").write_text(dot_graph(best.structure.E, joint.l, all_labels))
    write_coherence(outdir / "coherence.csv", grid, C, all_labels)
    summary = {"selected": result.selected, "edges": len(best.structure.E), "l": best.l, "D": best.D, "p": best.p, "f": best.f}
    if cfg.inputs.get("truth"):
        truth = TrueModel.load(cfg.inputs["truth"])
        if truth.m != data.m or truth.n != cfg.n:
            raise ConfigError("truth model dimensions do not match the data and order")
        curves = spectral_errors((truth.sigma(), truth.lam()), (best.solution.sigma(), best.solution.lam()), grid)
        write_curves(outdir / "errors.csv", grid, {"e_sigma": curves["sigma"], "e_lambda": curves["lambda"]})
        te = truth.edges()
        summary["truth"] = {
            "edges_exact": best.structure.E == te,
            "l_exact": best.l == truth.l,
            "missing": len(te.pairs - best.structure.E.pairs),
            "extra": len(best.structure.E.pairs - te.pairs),
        }
    write_json(outdir / "summary.json", summary)
    return summary


def cmd_score(cfg: RunConfig) -> dict:
    data = _load_data(cfg.inputs["data"], cfg.options["returns"])
    obj = read_json(cfg.inputs["model"])
    sol = model_from_json(obj)
    if sol.m != data.m:
        raise ConfigError(f"model has m={sol.m} but data has {data.m} columns")
    sc = cfg.sweep
    saved = obj.get("score_config") or {}
    # the saved settings reproduce the sweep's score unless overridden
    if sc.bartlett_M is None:
        sc.bartlett_M = saved.get("bartlett_M")
    if cfg.options["static"]:
        sc.bartlett_M = 0
    grid = FreqGrid(sc.grid_size)
    Phi_C = reference_spectrum(data, sc, grid)
    D, p, f = score_solution(sol, Phi_C, grid, data.N, sc)
    report = {"D": D, "p": p, "f": f, "edges": len(sol.structure.E), "l": sol.l, "static": cfg.options["static"]}
    if cfg.outputs.get("report"):
        write_json(cfg.outputs["report"], report)
    return report


COMMANDS = {"simulate": cmd_simulate, "identify": cmd_identify, "score": cmd_score}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s %(solver)s" if args.verbose > 1 else "%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    if args.verbose > 1:
        _install_solver_field()
    try:
        cfg = config_from_args(args)
        cfg.validate()
        out = COMMANDS[cfg.command](cfg)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, DegenerateDataError):
            print(f"error: degenerate data: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, StructureRecoveryError, RuntimeError) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    from .serialize import dumps

    sys.stdout.write(dumps(out))
    return EXIT_OK


def _install_solver_field() -> None:
    old = logging.getLogRecordFactory()

    def factory(*a, **k):
        rec = old(*a, **k)
        if not hasattr(rec, "solver"):
            rec.solver = ""
        return rec

    logging.setLogRecordFactory(factory)


if __name__ == "__main__":
    raise SystemExit(main())
