"""Random Ising grids and the certificate-versus-empirical sweep harness.

Couplings are drawn with Box-Muller on uniforms from
``numpy.random.Generator(PCG64(seed))``: uniforms are consumed in pairs
``(u1, u2)`` and each pair yields ``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)``
with ``r = sqrt(-2*log(1 - u1))``.  Edges are visited in row-major vertex
order, right edge before down edge, so a seed fully pins an instance.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from itertools import combinations
from typing import Iterable, Sequence, TextIO
from xml.sax.saxutils import escape

import numpy as np

from .certificates import ihler_condition, l1_condition_general
from .factor_graph import Factor, FactorGraph, format_float
from .lbp import LbpOptions, quotient_distance, run
from .spectral import spectral_condition

__all__ = [
    "CSV_HEADER",
    "EmpiricalResult",
    "GridSpec",
    "SweepRow",
    "box_muller",
    "emit_csv",
    "emit_phase_plot",
    "empirical_convergence",
    "evaluate_instance",
    "generate_grid",
    "grid_couplings",
    "phase_boundaries",
    "read_csv",
    "run_sweep",
]

CSV_HEADER = (
    "instance,seed,j0,sigma,l1_value,rho,ihler_value,l1_pass,spectral_pass,"
    "ihler_pass,empirical_converged,iterations,final_residual"
)


@dataclass(frozen=True)
class GridSpec:
    """2D grid of binary spins with ``J_ij ~ Normal(j0, sigma**2)``."""

    rows: int = 10
    cols: int = 10
    periodic: bool = True
    j0: float = 0.0
    sigma: float = 0.0
    theta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError(f"grid needs rows, cols >= 2, got {self.rows}x{self.cols}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def box_muller(seed: int, n: int) -> np.ndarray:
    """``n`` standard normal draws (see module docstring for the recipe)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((n + 1) // 2 * 2).reshape(-1, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    ang = 2.0 * np.pi * u[:, 1]
    return np.column_stack([r * np.cos(ang), r * np.sin(ang)]).ravel()[:n]


def _grid_pairs(spec: GridSpec) -> list[tuple[int, int]]:
    pairs = []
    R, C = spec.rows, spec.cols
    for r in range(R):
        for c in range(C):
            v = r * C + c
            if spec.periodic or c + 1 < C:
                pairs.append((v, r * C + (c + 1) % C))
            if spec.periodic or r + 1 < R:
                pairs.append((v, ((r + 1) % R) * C + c))
    return pairs


def grid_couplings(spec: GridSpec) -> list[tuple[int, int, float]]:
    """Edge list ``(i, j, J_ij)`` in the documented generation order."""
    pairs = _grid_pairs(spec)
    z = box_muller(spec.seed, len(pairs))
    return [(i, j, spec.j0 + spec.sigma * float(zk)) for (i, j), zk in zip(pairs, z)]


def ising_pair_factor(i: int, j: int, J: float) -> Factor:
    a, b = math.exp(J), math.exp(-J)
    return Factor((i, j), (2, 2), [a, b, b, a])


def generate_grid(spec: GridSpec) -> FactorGraph:
    """Factor graph with one ``exp(J x_i x_j)`` factor per grid edge.

    Single-variable factors ``exp(theta x_i)`` are added only for
    ``theta != 0``.
    """
    factors = [ising_pair_factor(i, j, J) for i, j, J in grid_couplings(spec)]
    n = spec.rows * spec.cols
    if spec.theta != 0:
        lo, hi = math.exp(-spec.theta), math.exp(spec.theta)
        factors += [Factor((v,), (2,), [lo, hi]) for v in range(n)]
    return FactorGraph((2,) * n, factors)


@dataclass(frozen=True)
class EmpiricalResult:
    """``spread`` is the largest pairwise quotient distance between converged runs."""

    fraction_converged: float
    mean_iterations: float
    max_iterations: int
    max_residual: float
    spread: float


def empirical_convergence(
    g: FactorGraph, trials: int, opts: LbpOptions | None = None, seed: int = 0
) -> EmpiricalResult:
    """Run LBP from ``trials`` random initialisations (seeds ``seed + t``)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    opts = opts or LbpOptions()
    results = [
        run(g, LbpOptions(opts.max_iters, opts.tol, opts.damping, "random", seed + t, opts.residual))
        for t in range(trials)
    ]
    conv = [r for r in results if r.converged]
    spread = 0.0
    for a, b in combinations(conv, 2):
        spread = max(spread, quotient_distance(a.messages, b.messages))
    return EmpiricalResult(
        fraction_converged=len(conv) / trials,
        mean_iterations=float(np.mean([r.iterations for r in conv])) if conv else float("nan"),
        max_iterations=max(r.iterations for r in results),
        max_residual=max(r.final_residual for r in results),
        spread=spread,
    )


@dataclass(frozen=True)
class SweepRow:
    """One grid instance: certificate values and the empirical outcome.

    ``empirical_converged`` requires every trial to converge; ``iterations``
    and ``final_residual`` are the worst over trials.  ``spread`` is kept in
    memory only and is not part of the CSV.
    """

    instance: int
    seed: int
    j0: float
    sigma: float
    l1_value: float
    rho: float
    ihler_value: float
    l1_pass: bool
    spectral_pass: bool
    ihler_pass: bool
    empirical_converged: bool
    iterations: int
    final_residual: float
    spread: float = 0.0


_CSV_FIELDS = CSV_HEADER.split(",")


def evaluate_instance(spec: GridSpec, instance: int, trials: int, opts: LbpOptions) -> SweepRow:
    g = generate_grid(spec)
    l1 = l1_condition_general(g)
    sp = spectral_condition(g)
    ih = ihler_condition(g)
    emp = empirical_convergence(g, trials, opts, seed=spec.seed)
    return SweepRow(
        instance=instance,
        seed=spec.seed,
        j0=spec.j0,
        sigma=spec.sigma,
        l1_value=l1.value,
        rho=sp.value,
        ihler_value=ih.value,
        l1_pass=l1.passed,
        spectral_pass=sp.passed,
        ihler_pass=ih.passed,
        empirical_converged=emp.fraction_converged == 1.0,
        iterations=emp.max_iterations,
        final_residual=emp.max_residual,
        spread=emp.spread,
    )


def _work(item):
    return evaluate_instance(*item)


def run_sweep(
    specs: Sequence[GridSpec],
    instances_per_point: int,
    opts: LbpOptions | None = None,
    trials: int = 3,
    workers: int = 1,
) -> list[SweepRow]:
    """Evaluate ``instances_per_point`` instances for each spec.

    Instance ``k`` of a spec uses seed ``spec.seed + k``.  Rows come back in
    spec order, then instance order, whatever ``workers`` is.
    """
    if not specs:
        raise ValueError("run_sweep needs at least one spec")
    opts = opts or LbpOptions()
    items = [
        (GridSpec(s.rows, s.cols, s.periodic, s.j0, s.sigma, s.theta, s.seed + k), k, trials, opts)
        for s in specs
        for k in range(instances_per_point)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_work, items, chunksize=1))
    return [_work(it) for it in items]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def emit_csv(rows: Iterable[SweepRow], sink: TextIO) -> None:
    sink.write(CSV_HEADER + "\n")
    for r in rows:
        sink.write(",".join(_fmt(getattr(r, f)) for f in _CSV_FIELDS) + "\n")


def read_csv(source: TextIO) -> list[SweepRow]:
    """Inverse of :func:`emit_csv` (``spread`` comes back as 0)."""
    reader = csv.DictReader(source)
    if reader.fieldnames != _CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    types = {f.name: f.type for f in fields(SweepRow)}
    out = []
    for rec in reader:
        kw = {}
        for name in _CSV_FIELDS:
            t, raw = types[name], rec[name]
            if t in (bool, "bool"):
                if raw not in ("true", "false"):
                    raise ValueError(f"bad boolean {raw!r} in column {name}")
                kw[name] = raw == "true"
            elif t in (int, "int"):
                kw[name] = int(raw)
            else:
                kw[name] = float(raw)
        out.append(SweepRow(**kw))
    return out


# --------------------------------------------------------------------------
# Phase diagram
# --------------------------------------------------------------------------

SERIES = (
    ("empirical", "empirical LBP", "#000000", "6,4"),
    ("spectral", "spectral radius", "#1f77b4", None),
    ("l1", "l1 norm", "#d62728", "2,3"),
    ("ihler", "dynamic range", "#2ca02c", "8,3,2,3"),
)


def _lattice(rows: Sequence[SweepRow]):
    if not rows:
        raise ValueError("no rows to plot")
    j0s = sorted({r.j0 for r in rows})
    sigmas = sorted({r.sigma for r in rows})
    cells: dict[tuple[float, float], list[SweepRow]] = {}
    for r in rows:
        cells.setdefault((r.j0, r.sigma), []).append(r)
    if len(cells) != len(j0s) * len(sigmas):
        raise ValueError("rows do not cover a full (j0, sigma) lattice")
    means = {}
    for key, rs in cells.items():
        means[key] = {
            "spectral": float(np.mean([r.rho for r in rs])),
            "l1": float(np.mean([r.l1_value for r in rs])),
            "ihler": float(np.mean([r.ihler_value for r in rs])),
            # 1.5 - fraction reaches 1 exactly when the fraction drops to 0.5
            "empirical": 1.5 - float(np.mean([r.empirical_converged for r in rs])),
        }
    return j0s, sigmas, means


def _crossing(xs, vals):
    """First x where vals (walking xs in order) reaches 1, linearly interpolated."""
    for k, v in enumerate(vals):
        if v >= 1.0:
            if k == 0:
                return xs[0]
            v0 = vals[k - 1]
            return xs[k - 1] + (1.0 - v0) / (v - v0) * (xs[k] - xs[k - 1])
    return None


def phase_boundaries(rows: Sequence[SweepRow]) -> dict[str, list[tuple[float, float]]]:
    """Boundary points ``(j0, sigma)`` per series.

    For certificates the boundary is where the mean value reaches 1, for the
    empirical series where the converged fraction drops to 0.5.  With several
    sigma values the search runs up the sigma axis at every j0; with a single
    sigma it runs outward from j0 = 0 along the j0 axis.  A single-point
    lattice yields the point itself.
    """
    j0s, sigmas, means = _lattice(rows)
    out: dict[str, list[tuple[float, float]]] = {}
    for name, *_ in SERIES:
        pts = []
        if len(sigmas) > 1:
            for j0 in j0s:
                s = _crossing(sigmas, [means[(j0, s)][name] for s in sigmas])
                if s is not None:
                    pts.append((j0, s))
        elif len(j0s) > 1:
            sigma = sigmas[0]
            pos = [j for j in j0s if j >= 0]
            neg = [j for j in reversed(j0s) if j <= 0]
            for side in (neg, pos):
                if len(side) > 1:
                    j = _crossing(side, [means[(x, sigma)][name] for x in side])
                    if j is not None:
                        pts.append((j, sigma))
            pts.sort()
        else:
            pts.append((j0s[0], sigmas[0]))
        out[name] = pts
    return out


def emit_phase_plot(rows: Sequence[SweepRow], sink: TextIO) -> None:
    """Write an SVG phase diagram of the convergence boundaries.

    Axes are ``J0/J`` (horizontal) and ``J`` (vertical).  When every boundary
    lies on the ``J = 0`` line the horizontal axis shows ``J0`` instead.
    """
    bounds = phase_boundaries(rows)
    pts_all = [p for ps in bounds.values() for p in ps]
    ratio_axis = any(s > 0 for _, s in pts_all)

    if ratio_axis:
        # J0/J is undefined on the J = 0 line
        coords = {k: [(j0 / s, s) for j0, s in ps if s > 0] for k, ps in bounds.items()}
    else:
        coords = {k: list(ps) for k, ps in bounds.items()}
    flat = [c for cs in coords.values() for c in cs]
    xs = [c[0] for c in flat] or [0.0]
    ys = [c[1] for c in flat] or [0.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(0.0, min(ys)), max(ys)
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0
    W, H, L, R, T, B = 640, 480, 70, 190, 30, 60
    pw, ph = W - L - R, H - T - B

    def px(x):
        return L + (x - x0) / (x1 - x0) * pw

    def py(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    xlabel = "J0/J" if ratio_axis else "J0 (J = 0)"
    out.append(f'<text x="{L + pw / 2}" y="{H - 15}" text-anchor="middle" font-size="14">{escape(xlabel)}</text>')
    out.append(
        f'<text x="18" y="{T + ph / 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 18 {T + ph / 2})">J</text>'
    )
    for v, anchor in ((x0, "start"), (x1, "end")):
        out.append(f'<text x="{px(v):.2f}" y="{T + ph + 18}" text-anchor="{anchor}" font-size="11">{v:.4g}</text>')
    for v in (y0, y1):
        out.append(f'<text x="{L - 6}" y="{py(v) + 4:.2f}" text-anchor="end" font-size="11">{v:.4g}</text>')
    for k, (name, label, color, dash) in enumerate(SERIES):
        cs = sorted(coords[name])
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        if len(cs) > 1:
            path = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in cs)
            out.append(f'<polyline class="{name}" points="{path}" fill="none" stroke="{color}" stroke-width="2"{dash_attr}/>')
        for x, y in cs:
            out.append(f'<circle class="{name}" cx="{px(x):.2f}" cy="{py(y):.2f}" r="3.5" fill="{color}"/>')
        ly = T + 20 + 22 * k
        out.append(f'<line x1="{W - R + 15}" y1="{ly}" x2="{W - R + 45}" y2="{ly}" stroke="{color}" stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{W - R + 52}" y="{ly + 4}" font-size="12">{escape(label)}</text>')
    ly = T + 20 + 22 * len(SERIES)
    out.append(f'<text x="{W - R + 15}" y="{ly + 4}" font-size="11" fill="#777">Simon\'s condition: not available</text>')
    out.append("</svg>")
    sink.write("\n".join(out) + "\n")
