"""Command-line front end.

Exit codes: 0 success, 1 error, 2 geodesic run stopped before converging
(frames and report are still written).  Errors print ``error=<Code>`` on
their own line before the message.  Log verbosity comes from the
``PATHENERGY_LOG`` environment variable (error, info or debug).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as pio
from .energy import EnergyMode, path_energy, path_energy_gradient
from .errors import PathEnergyError, ShapeMismatch
from .geodesic import SolverConfig, choose_T, optimize_path, preprocess
from .grid import DEFAULT_EPS, downsample, threshold
from .metrics import sequence_metrics
from .oracle import fd_gradient

log = logging.getLogger("pathenergy")

GRADCHECK_TOL = 1e-5


class UsageError(PathEnergyError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_physics(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=["balanced", "unbalanced"])
    p.add_argument("--tau", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--bc", choices=["dirichlet", "neumann", "periodic"])
    p.add_argument("--obstacle", metavar="FILE")
    p.add_argument("--eps", type=float)
    p.add_argument("--config", metavar="FILE")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pathenergy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("geodesic", help="interpolate between two images")
    g.add_argument("--source", metavar="FILE")
    g.add_argument("--target", metavar="FILE")
    g.add_argument("--out", metavar="DIR")
    g.add_argument("--steps", type=int)
    g.add_argument("--downsample", type=int, metavar="N")
    g.add_argument("--max-iters", dest="max_iters", type=int)
    g.add_argument("--seed", type=int)
    _add_physics(g)

    e = sub.add_parser("energy", help="path energy of a directory of frames")
    e.add_argument("--frames", metavar="DIR")
    _add_physics(e)

    c = sub.add_parser("gradcheck", help="analytic gradient against finite differences")
    c.add_argument("--n", type=int)
    c.add_argument("--steps", type=int)
    c.add_argument("--seed", type=int)
    _add_physics(c)
    c.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)

    m = sub.add_parser("metrics", help="adjacent-frame SSIM of a directory of frames")
    m.add_argument("--frames", metavar="DIR")
    m.add_argument("--config", metavar="FILE")
    return parser


def _run_config(args) -> pio.RunConfig:
    file_values = pio.load_config(args.config) if getattr(args, "config", None) else {}
    return pio.merge_config(file_values, vars(args))


def _mode(cfg: pio.RunConfig, mask) -> EnergyMode:
    if cfg.mode == "unbalanced":
        return EnergyMode.unbalanced(cfg.tau, mask)
    return EnergyMode.balanced(mask)


def _load_mask(cfg: pio.RunConfig, n: int, original_n: int | None = None):
    if not cfg.obstacle:
        return None
    mask = pio.read_mask(cfg.obstacle)
    if original_n is not None and mask.shape == (original_n, original_n) and original_n != n:
        mask = downsample(mask.astype(float), n) > 0
    if mask.shape != (n, n):
        raise ShapeMismatch(f"mask {mask.shape} does not match images ({n}, {n})")
    return mask


def _fmt(v: float) -> str:
    return format(v, ".17g")


def cmd_geodesic(args) -> int:
    cfg = _run_config(args)
    for key in ("source", "target", "out"):
        if getattr(cfg, key) is None:
            raise UsageError(f"geodesic needs --{key}")
    src, tgt = pio.read_image(cfg.source), pio.read_image(cfg.target)
    if src.shape != tgt.shape:
        raise ShapeMismatch(f"source {src.shape} and target {tgt.shape} differ")
    n0 = src.shape[0]
    if cfg.downsample:
        src, tgt = downsample(src, cfg.downsample), downsample(tgt, cfg.downsample)
    n = src.shape[0]
    mask = _load_mask(cfg, n, n0)
    mode = _mode(cfg, mask)

    src = preprocess(src, cfg.eps, mask)
    if mode.is_unbalanced:
        tgt = preprocess(tgt, cfg.eps, mask)
    else:
        tgt = preprocess(tgt, cfg.eps, mask, target_mass=float(src.sum()))
    T = cfg.steps if cfg.steps is not None else choose_T(src, tgt)
    log.info("geodesic: n=%d T=%d mode=%s bc=%s", n, T, cfg.mode, cfg.bc)

    scfg = SolverConfig(
        T=T, eps=cfg.eps, bc=cfg.bc, mode=mode, beta=cfg.beta, max_iters=cfg.max_iters,
        step0=cfg.step0, tol_rel=cfg.tol_rel, seed=cfg.seed,
    )
    result = optimize_path(src, tgt, scfg)
    report = path_energy(result.path, cfg.bc, mode)
    metrics = sequence_metrics(result.path, report)

    out = Path(cfg.out)
    pio.write_frames(result.path, out, "frame")
    pio.write_report(report, metrics, out / "report.csv", extra={
        "mass_loss": result.mass_loss_final,
        "iterations": result.iterations,
        "converged": result.converged,
        "seed": cfg.seed,
    })
    print(f"T={T}")
    print(f"J={_fmt(report.J)}")
    print(f"w2_estimate={_fmt(metrics.w2)}")
    print(f"iterations={result.iterations} converged={str(result.converged).lower()}")
    return 0 if result.converged else 2


def cmd_energy(args) -> int:
    cfg = _run_config(args)
    if cfg.frames is None:
        raise UsageError("energy needs --frames")
    frames = pio.read_frames(cfg.frames)
    if frames.shape[0] < 2:
        raise UsageError("energy needs at least two frames")
    n = frames.shape[1]
    mask = _load_mask(cfg, n)
    frames = threshold(frames, cfg.eps)
    if mask is not None:
        frames[:, mask] = cfg.eps
    mode = _mode(cfg, mask)
    report = path_energy(frames, cfg.bc, mode)
    metrics = sequence_metrics(frames, report)
    pio.write_report(report, metrics, Path(cfg.frames) / "energy_report.csv")
    for t, e in enumerate(report.per_slice_energy):
        print(f"slice {t}: {_fmt(e)}")
    print(f"J={_fmt(report.J)}")
    return 0


def gradcheck(n: int, T: int, seed: int, bc: str, mode: EnergyMode, corrupt: bool = False) -> float:
    """Max relative deviation of the analytic gradient from central differences."""
    rng = np.random.default_rng(seed)
    path = rng.uniform(0.5, 1.5, size=(T + 1, n, n))
    mask = np.zeros((n, n), bool) if mode.obstacle is None else mode.obstacle
    path[:, mask] = DEFAULT_EPS
    if not mode.is_unbalanced:
        free = path[:, ~mask]
        path[:, ~mask] = free * (free.shape[1] / free.sum(axis=1))[:, None]
    # obstacle cells are fixed, not unknowns
    analytic = np.where(mask, 0.0, path_energy_gradient(path, bc, mode))
    numeric = fd_gradient(path, bc, mode.tau, mode.obstacle, step=1e-5)
    if corrupt:
        analytic = analytic.copy()
        analytic.flat[0] += 1e-2 * np.abs(numeric).max()
    scale = max(np.abs(numeric).max(), np.finfo(float).tiny)
    return float(np.abs(analytic - numeric).max() / scale)


def cmd_gradcheck(args) -> int:
    cfg = _run_config(args)
    T = cfg.steps if cfg.steps is not None else 4
    if cfg.n > 16 or T > 6 or T < 2:
        raise UsageError("gradcheck supports n <= 16 and 2 <= steps <= 6")
    mask = _load_mask(cfg, cfg.n)
    err = gradcheck(cfg.n, T, cfg.seed, cfg.bc, _mode(cfg, mask), args.corrupt_gradient)
    ok = err <= GRADCHECK_TOL
    print(f"max_rel_error={err:.3e} tol={GRADCHECK_TOL:.0e} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def cmd_metrics(args) -> int:
    cfg = _run_config(args)
    if cfg.frames is None:
        raise UsageError("metrics needs --frames")
    files = pio.list_frames(cfg.frames)
    if len(files) < 2:
        raise UsageError(f"metrics needs at least two frames, found {len(files)}")
    frames = pio.read_frames(cfg.frames)
    metrics = sequence_metrics(frames)
    pio.write_report(None, metrics, Path(cfg.frames) / "metrics.csv")
    for t, s in enumerate(metrics.ssim_pairs):
        print(f"ssim {t}->{t + 1}: {s:.6f}")
    print(f"ssim_mean={_fmt(metrics.ssim_mean)}")
    print(f"ssim_std={_fmt(metrics.ssim_std)}")
    return 0


COMMANDS = {
    "geodesic": cmd_geodesic,
    "energy": cmd_energy,
    "gradcheck": cmd_gradcheck,
    "metrics": cmd_metrics,
}


def main(argv=None) -> int:
    level = pio.default_log_level()
    logging.basicConfig(
        level={"error": logging.ERROR, "debug": logging.DEBUG}.get(level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except PathEnergyError as exc:
        print(f"error={exc.code}", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return 1
    except ValueError as exc:
        print("error=InvalidArgument", file=sys.stderr)
        print(str(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
