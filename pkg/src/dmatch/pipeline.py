"""Stereo, flow and benchmark drivers: discrete solve, continuous
refinement and file output."""

from __future__ import annotations

import csv
import io as _io
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from . import io as fio
from .census import census_transform, edge_weights, flow_cost_volume, hamming_cost_volume
from .continuous import ContinuousProblem, refine
from .energy import GridProblem, PenaltyParams, build_grid_graph, decouple_flow_costs
from .errors import ConfigurationError, DimensionError
from .minorants import MINORANT_KINDS
from .solvers import SolverConfig, solve
from .synthetic import bench_instance

__all__ = [
    "RunConfig",
    "CSV_HEADER",
    "StereoResult",
    "FlowResult",
    "match_stereo",
    "match_flow",
    "left_right_check",
    "bench_rows",
    "run_stereo",
    "run_flow",
    "run_bench",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("solver", "iter", "lower_bound", "primal_energy", "millis")
BENCH_MINORANTS = ("naive", "uniform", "iterative", "hierarchical")


@dataclass
class RunConfig:
    mode: str = "stereo"
    left: Optional[str] = None
    right: Optional[str] = None
    out: Optional[str] = None
    color: Optional[str] = None
    log: Optional[str] = None
    plot: bool = True
    dmin: int = 0
    dmax: int = 63
    umin: int = -4
    umax: int = 4
    vmin: int = -4
    vmax: int = 4
    eps: float = 0.25
    delta: float = 2.0
    trunc: float = 4.0
    reg_weight: float = 4.0
    edge_a: float = 5.0
    edge_b: float = 1.0
    w_min: float = 0.05
    window: int = 5
    method: str = "dmm"
    minorant: str = "hierarchical"
    dmm_iters: int = 4
    warps: int = 5
    pd_iters: int = 40
    h: float = 0.5
    lr_check: bool = False
    lr_threshold: float = 1.0
    timing: bool = False
    # bench only
    size: int = 40
    labels: int = 16
    seed: int = 3
    bench_iters: int = 20
    crop: Optional[Tuple[int, int]] = None
    minorants: Tuple[str, ...] = BENCH_MINORANTS

    def __post_init__(self):
        if self.mode not in ("stereo", "flow", "bench"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.dmax < self.dmin:
            raise ConfigurationError("disparity range is empty")
        if self.umax < self.umin or self.vmax < self.vmin:
            raise ConfigurationError("flow range is empty")
        for name in ("dmm_iters", "bench_iters"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name.replace('_', '-')} must be at least 1")
        if self.warps < 0 or self.pd_iters < 0:
            raise ConfigurationError("warps and pd-iters must be nonnegative")
        if self.h <= 0:
            raise ConfigurationError("h must be positive")
        if self.reg_weight < 0:
            raise ConfigurationError("reg-weight must be nonnegative")
        if self.size < 2 or self.labels < 2:
            raise ConfigurationError("bench size and labels must be at least 2")
        if self.lr_threshold < 0:
            raise ConfigurationError("lr-threshold must be nonnegative")
        for k in (self.minorant, *self.minorants):
            if k not in MINORANT_KINDS:
                raise ConfigurationError(f"unknown minorant {k!r}")
        try:
            self.penalty
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None

    @property
    def penalty(self) -> PenaltyParams:
        return PenaltyParams(self.eps, self.delta, self.trunc)

    @property
    def solver_name(self) -> str:
        return f"dmm-{self.minorant}" if self.method == "dmm" else self.method

    def solver(self, iterations=None, minorant=None, method=None) -> SolverConfig:
        return SolverConfig(method=method or self.method,
                            iterations=iterations or self.dmm_iters,
                            minorant=minorant or self.minorant)


@dataclass
class StereoResult:
    disparity: np.ndarray  # refined, left view; invalid pixels -inf
    discrete: np.ndarray  # discrete stage, label values
    rows: List[tuple] = field(default_factory=list)


@dataclass
class FlowResult:
    flow: np.ndarray  # (H, W, 2)
    discrete: np.ndarray
    rows: List[tuple] = field(default_factory=list)


def _graph(image, cfg: RunConfig):
    H, W = image.shape[:2]
    g = build_grid_graph(W, H)
    w = cfg.reg_weight * edge_weights(image, g, cfg.edge_a, cfg.edge_b, cfg.w_min)
    return g.with_weights(w)


def _history_rows(name, result, timing):
    return [(name, k + 1, b, e, m if timing else 0.0)
            for k, (b, e, m) in enumerate(zip(result.bound_history, result.energy_history,
                                              result.millis))]


def _check_pair(a, b):
    if a.shape[:2] != b.shape[:2]:
        raise DimensionError(f"image sizes differ: {a.shape[1]}x{a.shape[0]} "
                             f"vs {b.shape[1]}x{b.shape[0]}")


def _stereo_one_view(ref, other, values, cfg, name):
    """Discrete then continuous disparity for ``ref`` matched against
    ``other`` at ``x - d`` for each label value ``d``."""
    cref, cother = census_transform(ref, cfg.window), census_transform(other, cfg.window)
    vol = hamming_cost_volume(cref, cother, values)
    g = _graph(ref, cfg)
    problem = GridProblem(vol, g, cfg.penalty)
    result = solve(problem, cfg.solver())
    discrete = vol.label_values[result.labeling]
    cp = ContinuousProblem(vol, g, cfg.penalty, cfg.h)
    u = _finite(refine(discrete, cp, cfg.warps, cfg.pd_iters))
    return u, discrete, _history_rows(name, result, cfg.timing)


def _finite(u):
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("refinement produced non-finite values")
    return u


def left_right_check(disp_left, disp_right, threshold: float = 1.0):
    """Invalidate left pixels whose match disagrees with the right view by
    more than ``threshold``; also pixels matched outside the frame.  Kept
    pixels are returned unchanged, removed ones are ``-inf``."""
    dl = np.asarray(disp_left, dtype=np.float64)
    dr = np.asarray(disp_right, dtype=np.float64)
    H, W = dl.shape
    xs = np.arange(W)[None, :] - np.round(dl)
    inside = (xs >= 0) & (xs < W)
    xi = np.clip(xs, 0, W - 1).astype(np.int64)
    other = dr[np.arange(H)[:, None], xi]
    ok = inside & (np.abs(dl - other) <= threshold)
    return np.where(ok, dl, -np.inf)


def match_stereo(left, right, cfg: RunConfig) -> StereoResult:
    _check_pair(left, right)
    values = np.arange(cfg.dmin, cfg.dmax + 1, dtype=np.float64)
    u, discrete, rows = _stereo_one_view(left, right, values, cfg,
                                         cfg.solver_name)
    if cfg.lr_check:
        # right view: pixel x matches left x + d, i.e. shift by -d
        ur, _, _ = _stereo_one_view(right, left, -values[::-1], cfg, "right")
        u = left_right_check(u, -ur, cfg.lr_threshold)
    return StereoResult(u, discrete, rows)


def match_flow(first, second, cfg: RunConfig) -> FlowResult:
    _check_pair(first, second)
    r1 = np.arange(cfg.umin, cfg.umax + 1, dtype=np.float64)
    r2 = np.arange(cfg.vmin, cfg.vmax + 1, dtype=np.float64)
    c1, c2 = census_transform(first, cfg.window), census_transform(second, cfg.window)
    vol2 = flow_cost_volume(c1, c2, r1, r2)
    g = _graph(first, cfg)
    rows, parts = [], []
    name = cfg.solver_name
    for comp, vol in zip("uv", decouple_flow_costs(vol2)):
        res = solve(GridProblem(vol, g, cfg.penalty), cfg.solver())
        parts.append(vol.label_values[res.labeling])
        rows += _history_rows(f"{name}-{comp}", res, cfg.timing)
    discrete = np.stack(parts, axis=-1)
    cp = ContinuousProblem(vol2, g, cfg.penalty, cfg.h)
    flow = _finite(refine(discrete, cp, cfg.warps, cfg.pd_iters))
    return FlowResult(flow, discrete, rows)


def bench_rows(cfg: RunConfig, left=None, right=None) -> List[tuple]:
    """Bound and energy traces of TRW-S and DMM (one per minorant) on a
    truncated-linear crop; every solver gets ``bench_iters`` iterations of
    two per-pixel updates each."""
    if left is None:
        left, right = bench_instance(cfg.size, cfg.labels, cfg.seed)
    else:
        _check_pair(left, right)
        if cfg.crop is not None:
            x0, y0 = cfg.crop
            sl = (slice(y0, y0 + cfg.size), slice(x0, x0 + cfg.size))
            left, right = left[sl], right[sl]
            if left.shape[0] < cfg.size or left.shape[1] < cfg.size:
                raise DimensionError("crop rectangle leaves the image")
    cl, cr = census_transform(left, cfg.window), census_transform(right, cfg.window)
    vol = hamming_cost_volume(cl, cr, np.arange(cfg.labels))
    problem = GridProblem(vol, _graph(left, cfg), PenaltyParams.truncated_linear(cfg.trunc))
    rows = []
    res = solve(problem, SolverConfig(method="trws", iterations=cfg.bench_iters))
    rows += _history_rows("trws", res, cfg.timing)
    for kind in cfg.minorants:
        res = solve(problem, SolverConfig(method="dmm", iterations=cfg.bench_iters,
                                          minorant=kind))
        rows += _history_rows(f"dmm-{kind}", res, cfg.timing)
    return rows


def _format(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not np.isfinite(v):
        return "nan" if np.isnan(v) else ("inf" if v > 0 else "-inf")
    return repr(round(v, 9))


def write_csv(path, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r[0]] + [_format(v) for v in r[1:]])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def _stem(path):
    return os.path.splitext(os.fspath(path))[0]


def _write_report(cfg, rows, default_stem):
    csv_path = cfg.log or default_stem + ".csv"
    write_csv(csv_path, rows)
    if cfg.plot:
        from .plotting import plot_convergence
        plot_convergence(rows, _stem(csv_path) + "_convergence.png")
    return csv_path


def _require(path, what):
    if not path:
        raise ConfigurationError(f"--{what} is required")
    return path


def run_stereo(cfg: RunConfig) -> int:
    left = fio.read_image(_require(cfg.left, "left"))
    right = fio.read_image(_require(cfg.right, "right"))
    out = _require(cfg.out, "out")
    res = match_stereo(left, right, cfg)
    fio.write_pfm(out, res.disparity)
    fio.write_color(cfg.color or _stem(out) + "_color.png",
                    fio.colorize_disparity(res.disparity, cfg.dmin, cfg.dmax))
    _write_report(cfg, res.rows, _stem(out))
    if cfg.plot:
        from .plotting import plot_field
        plot_field(res.disparity, _stem(out) + "_disparity.png", cfg.dmin, cfg.dmax,
                   cmap="viridis")
    return 0


def run_flow(cfg: RunConfig) -> int:
    first = fio.read_image(_require(cfg.left, "first"))
    second = fio.read_image(_require(cfg.right, "second"))
    out = _require(cfg.out, "out")
    res = match_flow(first, second, cfg)
    fio.write_flo(out, res.flow)
    fio.write_color(cfg.color or _stem(out) + "_color.png", fio.colorize_flow(res.flow))
    _write_report(cfg, res.rows, _stem(out))
    return 0


def run_bench(cfg: RunConfig) -> int:
    left = right = None
    if cfg.left or cfg.right:
        left = fio.read_image(_require(cfg.left, "left"))
        right = fio.read_image(_require(cfg.right, "right"))
    rows = bench_rows(cfg, left, right)
    out = cfg.out or cfg.log or "bench.csv"
    write_csv(out, rows)
    if cfg.plot:
        from .plotting import plot_convergence
        plot_convergence(rows, _stem(out) + "_convergence.png",
                         title=f"{cfg.size}x{cfg.size}, {cfg.labels} labels")
    return 0
