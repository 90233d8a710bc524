"""File output: legacy VTK solution dumps, SVG convergence plots, CSV tables.

Every writer is deterministic: floats are written with ``repr`` (VTK, CSV)
or a fixed number of decimals (SVG), and no timestamps are embedded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .adapt import ConvergenceRecord, fit_rate
from .assembly import boundary_trace
from .mesh import BoundaryClass, Mesh, refine_uniform
from .quadrature import QuadratureRule
from .solver import ContactState, DiscreteSolution

VTK_LINE = 3
VTK_TRIANGLE = 5


class OutputError(OSError):
    """A result file could not be written."""


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


# VTK ----------------------------------------------------------------------

def nodal_multiplier(u: DiscreteSolution, c: ContactState) -> np.ndarray:
    """Multiplier at the Lagrange nodes of the contact edges, zero elsewhere.

    At a vertex shared by two contact edges the two one-sided values are
    averaged.
    """
    d = u.dofmap
    m = d.mesh
    out = np.zeros(d.ndofs)
    if len(c.edges) == 0:
        return out
    s = np.array([0.0, 0.5, 1.0]) if d.degree == 2 else np.array([0.0, 1.0])
    rule = QuadratureRule(s, np.full(len(s), 1.0 / len(s)), 0)
    tr = boundary_trace(m, d, c.edges, rule)
    raw = tr.normal_derivative(u.coefficients) - tr.trace(u.coefficients) / (u.alpha * tr.h[:, None])
    lam = np.maximum(raw, 0.0)
    K, k = m.e2t[c.edges, 0], m.e2l[c.edges, 0]
    nodes = [m.t[K, k], m.t[K, (k + 1) % 3]]
    vals = [lam[:, 0], lam[:, -1]]
    if d.degree == 2:
        nodes.append(m.nv + c.edges)
        vals.append(lam[:, 1])
    nodes, vals = np.concatenate(nodes), np.concatenate(vals)
    count = np.bincount(nodes, minlength=d.ndofs)
    total = np.bincount(nodes, vals, minlength=d.ndofs)
    hit = count > 0
    out[hit] = total[hit] / count[hit]
    return out


def _edge_flags(m: Mesh, c: ContactState) -> np.ndarray:
    flag = np.zeros(m.ne, dtype=int)
    if len(c.edges):
        flag[c.edges] = c.active.any(axis=1).astype(int)
    return flag


def write_solution_vtk(m: Mesh, u: DiscreteSolution, c: ContactState, path) -> None:
    """Legacy ASCII unstructured grid with the solution and contact data.

    Triangles carry the field; boundary edges are added as line cells so
    the cell data ``contact`` (1 where any contact quadrature point is
    active) and ``boundary_class`` can be shown on the boundary.  P2 fields
    are written on the uniformly refined P1 mesh whose vertices are the P2
    nodes.  Point data: ``u`` and ``lambda`` (see :func:`nodal_multiplier`).
    """
    if u.mesh is not m:
        raise ValueError("solution lives on a different mesh")
    shadow = refine_uniform(m) if u.degree == 2 else m
    lam = nodal_multiplier(u, c)
    flag = _edge_flags(m, c)
    bnd = m.boundary_edges
    if u.degree == 2:
        lines = np.vstack([np.column_stack([m.edges[bnd, 0], m.nv + bnd]),
                           np.column_stack([m.nv + bnd, m.edges[bnd, 1]])])
        parent = np.concatenate([bnd, bnd])
    else:
        lines, parent = m.edges[bnd], bnd
    order = np.lexsort((lines[:, 1], lines[:, 0]))
    lines, parent = lines[order], parent[order]

    pts = shadow.p
    tris = shadow.t
    nc = len(tris) + len(lines)
    out = ["# vtk DataFile Version 3.0", f"signorini P{u.degree} solution", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in pts.tolist()]
    out.append(f"CELLS {nc} {4 * len(tris) + 3 * len(lines)}")
    out += [f"3 {a} {b} {c_}" for a, b, c_ in tris.tolist()]
    out += [f"2 {a} {b}" for a, b in lines.tolist()]
    out.append(f"CELL_TYPES {nc}")
    out += [str(VTK_TRIANGLE)] * len(tris) + [str(VTK_LINE)] * len(lines)
    out.append(f"POINT_DATA {len(pts)}")
    for name, values in (("u", u.coefficients), ("lambda", lam)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(v) for v in values.tolist()]
    out.append(f"CELL_DATA {nc}")
    out += ["SCALARS contact int 1", "LOOKUP_TABLE default"]
    out += ["0"] * len(tris) + [str(v) for v in flag[parent].tolist()]
    out += ["SCALARS boundary_class int 1", "LOOKUP_TABLE default"]
    out += ["-1"] * len(tris) + [str(v) for v in m.edge_tag[parent].tolist()]
    _write_text(path, "\n".join(out) + "\n")


@dataclass
class VTKGrid:
    points: np.ndarray
    cells: list
    cell_types: np.ndarray
    point_data: dict
    cell_data: dict


def read_vtk(path) -> VTKGrid:
    """Parse the subset of the legacy ASCII format written by this module."""
    with open(path) as fh:
        tokens = fh.read().split("\n")
    if not tokens[0].startswith("# vtk DataFile"):
        raise ValueError(f"{path}: not a legacy VTK file")
    words = " ".join(tokens[2:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        chunk = words[pos:pos + n]
        pos += n
        return chunk

    points = cells = types = None
    point_data, cell_data = {}, {}
    current = None
    while pos < len(words):
        key = take(1)[0]
        if key in ("ASCII", "DATASET", "UNSTRUCTURED_GRID"):
            continue
        if key == "POINTS":
            n, _ = take(2)
            points = np.array(take(3 * int(n)), dtype=float).reshape(-1, 3)
        elif key == "CELLS":
            n, _ = take(2)
            cells = []
            for _ in range(int(n)):
                k = int(take(1)[0])
                cells.append([int(v) for v in take(k)])
        elif key == "CELL_TYPES":
            types = np.array(take(int(take(1)[0])), dtype=int)
        elif key == "POINT_DATA":
            current = (point_data, int(take(1)[0]))
        elif key == "CELL_DATA":
            current = (cell_data, int(take(1)[0]))
        elif key == "SCALARS":
            name, dtype, _ = take(3)
            if take(2)[0] != "LOOKUP_TABLE":
                raise ValueError(f"{path}: expected LOOKUP_TABLE after {name}")
            target, n = current
            target[name] = np.array(take(n), dtype=float if dtype in ("double", "float") else int)
        else:
            raise ValueError(f"{path}: unexpected token {key!r}")
    return VTKGrid(points, cells, types, point_data, cell_data)


# SVG ----------------------------------------------------------------------

@dataclass
class PlotSpec:
    guides: tuple = (-0.75, -1.0)
    width: int = 640
    height: int = 480
    title: str = "eta + S against N"
    tail: int = 4


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def _decades(lo, hi):
    return list(range(math.floor(lo), math.ceil(hi) + 1))


def write_convergence_plot(series: dict, path, spec: PlotSpec | None = None) -> None:
    """Log-log plot of ``eta + S`` against ``N`` for named record series.

    Dashed guides with the slopes in ``spec.guides`` start at the first
    point of the first series.  A legend box lists every series with its
    fitted slope over the last ``spec.tail`` records.
    """
    spec = spec or PlotSpec()
    if not series:
        raise ValueError("no series to plot")
    data = {}
    for name, recs in series.items():
        if len(recs) < 2:
            raise ValueError(f"series {name!r} needs at least 2 records")
        N = np.array([r.N for r in recs], dtype=float)
        y = np.array([r.eta_plus_S for r in recs], dtype=float)
        if np.any(N <= 0) or np.any(~(y > 0)):
            raise ValueError(f"series {name!r} has nonpositive values")
        data[name] = (np.log10(N), np.log10(y), fit_rate(recs, min(spec.tail, len(recs))))

    xs = np.concatenate([d[0] for d in data.values()])
    ys = np.concatenate([d[1] for d in data.values()])
    x0, x1 = math.floor(xs.min()), math.ceil(xs.max())
    y0, y1 = math.floor(ys.min()), math.ceil(ys.max())
    if x1 == x0:
        x1 += 1
    if y1 == y0:
        y1 += 1
    W, H = spec.width, spec.height
    left, right, top, bottom = 70, 20, 40, 50

    def px(lx):
        return left + (lx - x0) / (x1 - x0) * (W - left - right)

    def py(ly):
        return top + (y1 - ly) / (y1 - y0) * (H - top - bottom)

    f = "{:.2f}".format
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.2f}" y="22" text-anchor="middle" font-size="14">'
           f'{escape(spec.title)}</text>',
           f'<defs><clipPath id="plot"><rect x="{left}" y="{top}" '
           f'width="{W - left - right}" height="{H - top - bottom}"/></clipPath></defs>']
    for d in _decades(x0, x1):
        out.append(f'<line x1="{f(px(d))}" y1="{top}" x2="{f(px(d))}" y2="{H - bottom}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{f(px(d))}" y="{H - bottom + 18}" text-anchor="middle">'
                   f'1e{d}</text>')
    for d in _decades(y0, y1):
        out.append(f'<line x1="{left}" y1="{f(py(d))}" x2="{W - right}" y2="{f(py(d))}" '
                   'stroke="#dddddd"/>')
        out.append(f'<text x="{left - 6}" y="{f(py(d) + 4)}" text-anchor="end">1e{d}</text>')
    out.append(f'<rect x="{left}" y="{top}" width="{W - left - right}" '
               f'height="{H - top - bottom}" fill="none" stroke="black"/>')
    out.append(f'<text x="{W / 2:.2f}" y="{H - 12}" text-anchor="middle">N</text>')
    out.append(f'<text x="16" y="{H / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {H / 2:.2f})">eta + S</text>')

    gx, gy = next(iter(data.values()))[:2]
    for slope in spec.guides:
        lx = np.array([gx[0], x1])
        ly = gy[0] + slope * (lx - gx[0])
        out.append(f'<line x1="{f(px(lx[0]))}" y1="{f(py(ly[0]))}" x2="{f(px(lx[1]))}" '
                   f'y2="{f(py(ly[1]))}" stroke="gray" stroke-dasharray="6,4" '
                   f'clip-path="url(#plot)"><title>slope {slope:g}</title></line>')

    for i, (name, (lx, ly, _)) in enumerate(data.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{f(px(a))},{f(py(b))}" for a, b in zip(lx, ly))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        out += [f'<circle cx="{f(px(a))}" cy="{f(py(b))}" r="3" fill="{color}"/>'
                for a, b in zip(lx, ly)]

    rows = [(name, _COLORS[i % len(_COLORS)], f"{name}: slope {rate:.3f}")
            for i, (name, (_, _, rate)) in enumerate(data.items())]
    rows += [("guide", "gray", f"guide: slope {s:g}") for s in spec.guides]
    bw, bh = 190, 18 * len(rows) + 10
    bx, by = W - right - bw - 10, top + 10
    out.append(f'<g class="legend"><rect x="{bx}" y="{by}" width="{bw}" height="{bh}" '
               'fill="white" stroke="black"/>')
    for j, (name, color, label) in enumerate(rows):
        yy = by + 18 * j + 18
        dash = ' stroke-dasharray="6,4"' if name == "guide" else ""
        out.append(f'<line x1="{bx + 8}" y1="{yy - 4}" x2="{bx + 30}" y2="{yy - 4}" '
                   f'stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{bx + 36}" y="{yy}">{escape(label)}</text>')
    out.append("</g>")
    out.append("</svg>")
    _write_text(path, "\n".join(out) + "\n")


# CSV ----------------------------------------------------------------------

def write_records_csv(records, path) -> None:
    from .adapt import CSV_HEADER

    _write_text(path, "\n".join([CSV_HEADER] + [r.csv_row() for r in records]) + "\n")


def read_records_csv(path) -> list[ConvergenceRecord]:
    """Parse a convergence table back into records."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    out = []
    for line in lines[1:]:
        f = line.split(",")
        out.append(ConvergenceRecord(
            step=int(f[0]), N=int(f[1]), eta=float(f[2]), S=float(f[3]),
            h_max=float(f[5]), active_points=int(f[6]), walltime_ms=float(f[7]),
            exact_h1_error=float(f[8]) if f[8] else None))
    return out


INDICATOR_HEADER = "kind,id,class,eta_K,osc_K,E_K,value"


def write_indicator_csv(m: Mesh, ind, path) -> None:
    """One row per element, then one per interior, contact and Neumann edge."""
    rows = [INDICATOR_HEADER]
    for k, (a, b, c) in enumerate(zip(ind.elem.tolist(), ind.osc.tolist(),
                                      ind.adaptive.tolist())):
        rows.append(f"element,{k},,{a!r},{b!r},{c!r},")
    groups = (("interior", ind.interior_edges, ind.interior),
              ("contact", ind.contact_edges, ind.contact),
              ("neumann", ind.neumann_edges, ind.neumann))
    for kind, edges, vals in groups:
        for e, v in zip(np.asarray(edges).tolist(), vals.tolist()):
            cls = "" if kind == "interior" else BoundaryClass(m.edge_tag[e]).name.lower()
            rows.append(f"{kind},{e},{cls},,,,{v!r}")
    _write_text(path, "\n".join(rows) + "\n")
