"""Figure renderers: planar trajectory with an uncertainty tube, barrier
value envelopes, and the keep-in polytope in three dimensions.

Band reconstruction relies on the bundled family kinds being unit-Lipschitz
in position and insensitive to velocity error, so the certified half-width
at every sample is exactly the logged rho_r.  True values must sit inside
the reconstructed band on any sound run; the envelope renderer checks this
while drawing and refuses to emit a figure that contradicts the log unless
the check is explicitly waived.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle
from scipy.spatial import ConvexHull, HalfspaceIntersection

from . import frames, kepler
from .io import (
    RunTable,
    halfspace_barriers,
    read_run_csv,
    read_scenario_json,
    zone_barriers,
)

KINDS = ("trajectory", "h_envelope", "polytope3d")
FRAMES = ("inertial", "rotating")

_CONTAIN_TOL = 1e-9


class ContainmentError(RuntimeError):
    """A true barrier value fell outside the reconstructed certified band."""


@dataclass(frozen=True)
class FigureSpec:
    run_csv: str
    kind: str
    out: str
    frame: str = "inertial"
    scenario: str | None = None
    check_containment: bool = True
    envelope_mode: str = "auto"  # auto | per-family | max

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        if self.envelope_mode not in ("auto", "per-family", "max"):
            raise ValueError(f"unknown envelope mode {self.envelope_mode!r}")


# ---------------------------------------------------------------------------
# geometry helpers (pure, unit-tested directly)


def tube_band(points: np.ndarray, radii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Band edges at signed offset +-radii[k] along the path normal.

    points (N, 2), radii (N,) -> (left, right), each (N, 2).  The half-width
    at sample k is radii[k] by construction.  Zero-length tangents (repeated
    points) reuse the nearest defined normal.
    """
    P = np.asarray(points, dtype=float)
    r = np.asarray(radii, dtype=float)
    if P.ndim != 2 or P.shape[1] != 2:
        raise ValueError("tube_band expects (N, 2) points")
    if P.shape[0] != r.shape[0]:
        raise ValueError("one radius per point")
    T = np.gradient(P, axis=0) if P.shape[0] > 1 else np.array([[1.0, 0.0]])
    norms = np.linalg.norm(T, axis=1)
    good = norms > 0.0
    if not good.any():
        T = np.tile([1.0, 0.0], (P.shape[0], 1))
        norms = np.ones(P.shape[0])
    else:
        # carry the last defined tangent across degenerate samples
        idx = np.where(good, np.arange(len(good)), -1)
        np.maximum.accumulate(idx, out=idx)
        first = int(np.argmax(good))
        idx[idx < 0] = first
        T = T[idx]
        norms = norms[idx]
    T = T / norms[:, None]
    N = np.stack([-T[:, 1], T[:, 0]], axis=1)
    return P + r[:, None] * N, P - r[:, None] * N


@dataclass(frozen=True)
class EnvelopeCurve:
    label: str
    h: np.ndarray
    upper: np.ndarray
    lower: np.ndarray


def envelope_series(run: RunTable, mode: str = "auto") -> list[EnvelopeCurve]:
    """Per-family (or max-over-families) true value plus certified band.

    The logged hhat is the upper edge; the lower edge is hhat - 2 rho_r.
    Mode 'auto' collapses to the single max curve when the family count is
    large (the keep-in polytopes), and keeps per-family curves otherwise.
    """
    m = run.n_families
    if m == 0:
        raise ValueError("run log carries no barrier columns")
    rho = run.col("rho_r")
    if mode == "auto":
        mode = "max" if m >= 10 else "per-family"
    if mode == "max":
        H = np.stack([run.col(f"h_{k}") for k in range(m)])
        U = np.stack([run.col(f"hhat_{k}") for k in range(m)])
        up = U.max(axis=0)
        return [
            EnvelopeCurve(
                label=f"max of {m} families",
                h=H.max(axis=0),
                upper=up,
                lower=up - 2.0 * rho,
            )
        ]
    out = []
    for k in range(m):
        up = run.col(f"hhat_{k}")
        out.append(
            EnvelopeCurve(
                label=f"family {k}",
                h=run.col(f"h_{k}"),
                upper=up,
                lower=up - 2.0 * rho,
            )
        )
    return out


def check_containment(run: RunTable) -> None:
    """Every true h must lie inside [hhat - 2 rho_r, hhat] at every sample."""
    rho = run.col("rho_r")
    t = run.col("t")
    for k in range(run.n_families):
        h = run.col(f"h_{k}")
        up = run.col(f"hhat_{k}")
        bad = (h > up + _CONTAIN_TOL) | (h < up - 2.0 * rho - _CONTAIN_TOL)
        if bad.any():
            i = int(np.argmax(bad))
            raise ContainmentError(
                f"true h_{k} = {h[i]:.6g} outside certified band "
                f"[{up[i] - 2.0 * rho[i]:.6g}, {up[i]:.6g}] at t = {t[i]:.3f}"
            )


# ---------------------------------------------------------------------------
# reference path and obstacle placement


def _reference(run: RunTable, scenario: dict | None, n: int):
    ts = run.col("t")
    if scenario is not None and "initial" in scenario:
        r0 = np.asarray(scenario["initial"]["r"], dtype=float)
        v0 = np.asarray(scenario["initial"]["v"], dtype=float)
        mu = float(scenario.get("mu", kepler.MU_EARTH))
        t0 = float(scenario["initial"].get("t0", ts[0]))
        if t0 != ts[0]:
            grid = np.concatenate([[t0], ts])
            R, V = kepler.twobody_states(r0, v0, mu, grid)
            return R[1:], V[1:]
        return kepler.twobody_states(r0, v0, mu, ts)
    r0 = run.stack("r", n)[0]
    v0 = run.stack("v", n)[0]
    return kepler.twobody_states(r0, v0, kepler.MU_EARTH, ts)


def _zone_overlays(run: RunTable, scenario: dict, dim: int):
    """(center, radius, epoch) per zone, placed at its closest approach."""
    t = run.col("t")
    out = []
    for k, zone in enumerate(zone_barriers(scenario)):
        try:
            h = run.col(f"h_{k}")
        except Exception:
            break
        t_star = float(t[int(np.argmax(h))])
        c_r, c_v = kepler.element_state(zone["orbit"], t_star, dim)
        out.append((c_r, c_v, float(zone["R_o"]), t_star))
    return out


# ---------------------------------------------------------------------------
# renderers


def _render_trajectory_2d(spec: FigureSpec, run: RunTable, scenario: dict | None):
    n = run.n
    truth = run.stack("r", n)
    est = run.stack("r_hat", n)
    rho = run.col("rho_r")
    ref_r, ref_v = _reference(run, scenario, n)

    if spec.frame == "rotating":
        truth_p = frames.to_rotating(truth, ref_r, ref_v)
        est_p = frames.to_rotating(est, ref_r, ref_v)
    else:
        truth_p, est_p = truth, est

    left, right = tube_band(est_p, rho)
    band = np.concatenate([left, right[::-1]], axis=0)

    fig, ax = plt.subplots(figsize=(7.0, 5.6))
    ax.fill(
        band[:, 0], band[:, 1],
        color="#4878a8", alpha=0.30, linewidth=0.0,
        label=r"estimate $\pm\,\hat\rho_r$",
    )
    ax.plot(est_p[:, 0], est_p[:, 1], "--", color="#2b4a6f", lw=1.0, label="estimate")
    ax.plot(truth_p[:, 0], truth_p[:, 1], color="#c0392b", lw=1.2, label="true path")
    ax.plot(truth_p[0, 0], truth_p[0, 1], "o", color="#c0392b", ms=5)

    if scenario is not None:
        for c_r, c_v, R_o, t_star in _zone_overlays(run, scenario, n):
            if spec.frame == "rotating":
                k = int(np.argmin(np.abs(run.col("t") - t_star)))
                B = frames.radial_basis(ref_r[k], ref_v[k])
                c = B @ (c_r - ref_r[k])
            else:
                c = c_r
            ax.add_patch(
                Circle(c, R_o, facecolor="#909090", alpha=0.45, edgecolor="#505050")
            )

    unit = "m"
    if spec.frame == "rotating":
        ax.set_xlabel(f"radial offset from reference [{unit}]")
        ax.set_ylabel(f"along-track offset [{unit}]")
    else:
        ax.set_xlabel(f"x [{unit}]")
        ax.set_ylabel(f"y [{unit}]")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    return fig


def _polytope_wireframe(halfspaces: list[dict]):
    """Vertices and edge index pairs of {y : p.y <= rho_off}."""
    P = np.array([b["p"] for b in halfspaces], dtype=float)
    off = np.array([b["rho_off"] for b in halfspaces], dtype=float)
    hs = np.hstack([P, -off[:, None]])
    verts = HalfspaceIntersection(hs, np.zeros(3)).intersections
    hull = ConvexHull(verts)
    edges = set()
    for simplex in hull.simplices:
        for a, b in ((0, 1), (1, 2), (2, 0)):
            edges.add(tuple(sorted((int(simplex[a]), int(simplex[b])))))
    return verts, sorted(edges)


def _render_polytope_3d(spec: FigureSpec, run: RunTable, scenario: dict | None):
    if run.n != 3:
        raise ValueError("polytope figures need a 3-dimensional run log")
    if scenario is None:
        raise ValueError("polytope figures need --scenario for the face geometry")
    faces = halfspace_barriers(scenario)
    if not faces:
        raise ValueError("scenario declares no keep-in faces")

    ts = run.col("t")
    truth = run.stack("r", 3)
    center_orbit = faces[0]["orbit"]
    c_r, c_v = kepler.element_states(center_orbit, ts, 3)
    if spec.frame == "rotating":
        rel = frames.to_rotating(truth, c_r, c_v)
    else:
        rel = frames.to_relative(truth, c_r)

    verts, edges = _polytope_wireframe(faces)

    fig = plt.figure(figsize=(7.0, 6.2))
    ax = fig.add_subplot(projection="3d")
    for a, b in edges:
        seg = verts[[a, b]]
        ax.plot(seg[:, 0], seg[:, 1], seg[:, 2], color="#707070", lw=0.8, alpha=0.8)
    ax.plot(rel[:, 0], rel[:, 1], rel[:, 2], color="#c0392b", lw=1.0, label="true path")
    ax.plot([rel[0, 0]], [rel[0, 1]], [rel[0, 2]], "o", color="#c0392b", ms=4)
    span = float(np.abs(verts).max()) * 1.1
    ax.set_xlim(-span, span)
    ax.set_ylim(-span, span)
    ax.set_zlim(-span, span)
    label = "radial/along-track/normal" if spec.frame == "rotating" else "inertial offset"
    ax.set_xlabel(f"x ({label}) [m]")
    ax.set_ylabel("y [m]")
    ax.set_zlabel("z [m]")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return fig


def _render_envelope(spec: FigureSpec, run: RunTable):
    if spec.check_containment:
        check_containment(run)
    t = run.col("t")
    curves = envelope_series(run, spec.envelope_mode)

    fig, ax = plt.subplots(figsize=(7.0, 4.4))
    cmap = plt.get_cmap("tab10")
    for k, cv in enumerate(curves):
        color = cmap(k % 10)
        ax.fill_between(t, cv.lower, cv.upper, color=color, alpha=0.22, linewidth=0.0)
        ax.plot(t, cv.h, color=color, lw=1.1, label=cv.label)
    ax.axhline(0.0, color="black", lw=0.9)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("barrier value [m]")
    if len(curves) <= 8:
        ax.legend(loc="best", fontsize=8, ncols=2)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    return fig


def render(spec: FigureSpec) -> str:
    """Render the figure described by spec; returns the output path."""
    spec.validate()
    run = read_run_csv(spec.run_csv)
    run.require(["t", "rho_r"])
    scenario = read_scenario_json(spec.scenario) if spec.scenario else None

    if spec.kind == "h_envelope":
        fig = _render_envelope(spec, run)
    elif spec.kind == "polytope3d" or (spec.kind == "trajectory" and run.n == 3):
        fig = _render_polytope_3d(spec, run, scenario)
    else:
        fig = _render_trajectory_2d(spec, run, scenario)
    try:
        fig.savefig(spec.out, dpi=150)
    finally:
        plt.close(fig)
    return spec.out
