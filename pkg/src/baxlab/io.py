"""JSON artifacts and deterministic SVG drawings."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .bipolar import BipolarOrientation, exploration
from .perm import Permutation
from .permuton import GridPermuton
from .walk import LatticeWalk, TandemWalk

SCHEMA = "baxlab/1"


class ArtifactError(ValueError):
    pass


def dumps(payload: dict, config: dict | None = None) -> str:
    """Canonical JSON text: sorted keys, no float noise beyond ``repr``."""
    doc = {"schema": SCHEMA, "config": config or {}, "payload": payload}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def write_artifact(path: str | Path, payload: dict, config: dict | None = None) -> None:
    Path(path).write_text(dumps(payload, config))


def read_artifact(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise ArtifactError(f"{path}: missing or unsupported schema (want {SCHEMA!r})")
    if not isinstance(doc.get("payload"), dict) or "type" not in doc["payload"]:
        raise ArtifactError(f"{path}: payload without a type")
    return doc


def load_object(payload: dict) -> Any:
    kind = payload["type"]
    if kind == "permutation":
        return Permutation.from_dict(payload)
    if kind == "tandem_walk":
        return TandemWalk.from_dict(payload)
    if kind == "lattice_walk":
        return LatticeWalk(np.asarray(payload["values"]), int(payload.get("t0", 1)))
    if kind == "grid_permuton":
        return GridPermuton.from_dict(payload)
    return payload


# ----------------------------------------------------------------------------
# SVG

def _svg(width: int, height: int, body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">')
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _f(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


def svg_permutation(sigma: Permutation, size: int = 600) -> str:
    """Diagram of ``sigma``: the point ``(i, sigma(i))`` at the center of its cell."""
    n = len(sigma)
    body = [f'<rect x="0" y="0" width="{size}" height="{size}" fill="none" stroke="black"/>']
    if n:
        cell = size / n
        r = max(0.6, min(cell * 0.35, 6.0))
        pts = "".join(
            f'<circle cx="{_f((i - 0.5) * cell)}" cy="{_f(size - (v - 0.5) * cell)}" r="{_f(r)}"/>'
            for i, v in enumerate(sigma.values, start=1))
        body.append(f'<g fill="black">{pts}</g>')
    return _svg(size, size, body)


def svg_walk(values: np.ndarray, size: int = 600) -> str:
    vals = np.asarray(values, dtype=float)
    lo = vals.min(axis=0)
    span = max(1.0, float((vals.max(axis=0) - lo).max()))
    scale = (size - 20) / span
    pts = " ".join(f"{_f(10 + (x - lo[0]) * scale)},{_f(size - 10 - (y - lo[1]) * scale)}" for x, y in vals)
    return _svg(size, size, [f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1"/>'])


def svg_grid(mu: GridPermuton, size: int = 512) -> str:
    """Heat map with darkness proportional to cell mass."""
    k = mu.k
    top = float(mu.mass.max()) or 1.0
    cell = size / k
    body = []
    for i in range(k):
        for j in range(k):
            m = mu.mass[i, j]
            if m <= 0:
                continue
            shade = int(round(255 * (1 - m / top)))
            body.append(f'<rect x="{_f(i * cell)}" y="{_f(size - (j + 1) * cell)}" width="{_f(cell)}" '
                        f'height="{_f(cell)}" fill="rgb({shade},{shade},{shade})"/>')
    return _svg(size, size, body)


def svg_coalescent(trajectories: list[list[int]], t0: int = 1, size: int = 600) -> str:
    """Trajectory fan: ``Z^(t)`` drawn from time ``t`` to the end."""
    n = len(trajectories)
    lo = min((min(z) for z in trajectories if z), default=0)
    hi = max((max(z) for z in trajectories if z), default=0)
    pad = 10
    sx = (size - 2 * pad) / max(1, n - 1)
    sy = (size - 2 * pad) / max(1, hi - lo)
    body = []
    for a, z in enumerate(trajectories):
        pts = " ".join(f"{_f(pad + (a + s) * sx)},{_f(size - pad - (v - lo) * sy)}" for s, v in enumerate(z))
        if len(z) == 1:
            x, y = pts.split(",")
            body.append(f'<circle cx="{x}" cy="{y}" r="2" fill="black"/>')
        else:
            body.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="0.5"/>')
    return _svg(size, size, body)


def svg_orientation(m: BipolarOrientation, size: int = 600) -> str:
    """Vertices at (left-to-right rank, longest-path height); edges as straight segments."""
    order = exploration(m)
    height = {m.source: 0}
    for v in _topological(m):
        for e in m.outs[v]:
            t = m.top[e]
            height[t] = max(height.get(t, 0), height[v] + 1)
    # a vertex's horizontal rank is the exploration rank of its last incoming edge
    rank = {e: r for r, e in enumerate(order, start=1)}
    xpos = {m.source: 0.0}
    for v in m.ins:
        if m.ins[v]:
            xpos[v] = float(np.mean([rank[e] for e in m.ins[v]]))
    xmax = max(xpos.values()) or 1.0
    hmax = max(height.values()) or 1
    pad = 20
    sx = (size - 2 * pad) / xmax
    sy = (size - 2 * pad) / hmax

    def pt(v):
        return pad + xpos[v] * sx, size - pad - height[v] * sy

    body = []
    for e in order:
        (x0, y0), (x1, y1) = pt(m.bottom[e]), pt(m.top[e])
        body.append(f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" stroke="black"/>')
    for v in sorted(m.ins, key=lambda v: (height[v], xpos[v], str(v))):
        x, y = pt(v)
        body.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3" fill="black"/>')
    return _svg(size, size, body)


def _topological(m: BipolarOrientation) -> list:
    indeg = {v: len(m.ins[v]) for v in m.ins}
    ready = [m.source]
    out = []
    while ready:
        v = ready.pop()
        out.append(v)
        for e in m.outs[v]:
            t = m.top[e]
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    return out


def render(payload: dict, size: int = 600) -> str:
    kind = payload.get("type")
    if kind == "permutation":
        return svg_permutation(Permutation.from_dict(payload), size)
    if kind in ("tandem_walk", "lattice_walk"):
        return svg_walk(np.asarray(payload["values"]), size)
    if kind == "grid_permuton":
        return svg_grid(GridPermuton.from_dict(payload), size)
    if kind == "coalescent":
        return svg_coalescent(payload["trajectories"], int(payload.get("t0", 1)), size)
    if kind == "bipolar_orientation":
        from .bipolar import theta_plain

        return svg_orientation(theta_plain(TandemWalk(np.asarray(payload["walk"]))), size)
    raise ArtifactError(f"cannot render payload of type {kind!r}")
