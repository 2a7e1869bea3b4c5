"""Planar triangulations with a boundary split into a Dirichlet part and a Wentzell part.

Boundary edges carry a tag: ``GAMMA0`` (homogeneous Dirichlet) or ``GAMMA1``
(dynamic/Wentzell boundary where the nonlinear source lives).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAMMA0 = 0
GAMMA1 = 1


class MeshError(ValueError):
    """Raised for malformed mesh input or invalid mesh parameters."""

    def __init__(self, message: str, diagnostics: list[str] | None = None, line: int | None = None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])
        self.line = line


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(np.reshape(self.vertices, (-1, 2)), float))
        object.__setattr__(self, "triangles", _frozen(np.reshape(self.triangles, (-1, 3)), np.int64))
        object.__setattr__(self, "boundary_edges", _frozen(np.reshape(self.boundary_edges, (-1, 2)), np.int64))
        object.__setattr__(self, "edge_tags", _frozen(np.reshape(self.edge_tags, (-1,)), np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges_with_tag(self, tag: int) -> np.ndarray:
        return self.boundary_edges[self.edge_tags == tag]

    def tag_length(self, tag: int) -> float:
        return float(self.edge_lengths[self.edge_tags == tag].sum())

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.boundary_edges, other.boundary_edges)
            and np.array_equal(self.edge_tags, other.edge_tags)
        )

    __hash__ = None


@dataclass(frozen=True)
class DofMap:
    free_dofs: np.ndarray
    constrained_dofs: np.ndarray
    boundary_dofs: np.ndarray
    n_vertices: int = field(default=0)

    @property
    def free_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.free_dofs] = True
        return mask

    @property
    def free_boundary_dofs(self) -> np.ndarray:
        """Vertices on the closure of GAMMA1 that are not pinned."""
        return np.setdiff1d(self.boundary_dofs, self.constrained_dofs)


def generate_annulus_mesh(r0: float, R: float, n_r: int, n_theta: int) -> Mesh:
    """Structured annulus; inner circle tagged GAMMA0, outer circle GAMMA1.

    Vertex ``i * n_theta + j`` sits on ring ``i`` (radius ``r0 + i (R - r0) / n_r``)
    at angle ``2 pi j / n_theta``.
    """
    if not (r0 > 0 and R > r0):
        raise MeshError(f"need 0 < r0 < R, got r0={r0}, R={R}")
    if n_r < 2 or n_theta < 8 or n_theta % 2:
        raise MeshError(f"need n_r >= 2 and even n_theta >= 8, got n_r={n_r}, n_theta={n_theta}")
    radii = np.linspace(r0, R, n_r + 1)
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    vertices = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])

    i, j = np.meshgrid(np.arange(n_r), np.arange(n_theta), indexing="ij")
    i, j = i.ravel(), j.ravel()
    jn = (j + 1) % n_theta
    a = i * n_theta + j
    b = (i + 1) * n_theta + j
    c = (i + 1) * n_theta + jn
    d = i * n_theta + jn
    triangles = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])

    jj = np.arange(n_theta)
    inner = np.column_stack([jj, (jj + 1) % n_theta])
    outer = n_r * n_theta + inner
    edges = np.concatenate([inner, outer])
    tags = np.concatenate([np.full(n_theta, GAMMA0), np.full(n_theta, GAMMA1)])
    return Mesh(vertices, triangles, edges, tags)


def _triangle_edge_counts(triangles: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for tri in triangles:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def validate_mesh(mesh: Mesh) -> list[str]:
    """Return a list of violated invariants; an empty list means the mesh is valid."""
    diags: list[str] = []
    nv = mesh.n_vertices
    if mesh.triangles.size and (mesh.triangles.min() < 0 or mesh.triangles.max() >= nv):
        diags.append("triangle references a vertex index out of range")
        return diags
    if mesh.boundary_edges.size and (mesh.boundary_edges.min() < 0 or mesh.boundary_edges.max() >= nv):
        diags.append("boundary edge references a vertex index out of range")
        return diags

    for t in np.flatnonzero(~(mesh.signed_areas() > 0)):
        diags.append(f"inverted or degenerate triangle {t}: signed area {mesh.signed_areas()[t]:.3e}")

    for e in np.flatnonzero((mesh.edge_tags != GAMMA0) & (mesh.edge_tags != GAMMA1)):
        diags.append(f"boundary edge {e}: unknown tag {mesh.edge_tags[e]}")

    counts = _triangle_edge_counts(mesh.triangles)
    declared: dict[tuple[int, int], int] = {}
    for e, (a, b) in enumerate(mesh.boundary_edges):
        key = (int(min(a, b)), int(max(a, b)))
        if key in declared:
            diags.append(f"boundary edge {e}: duplicate of edge {declared[key]} (carries two tags)")
            continue
        declared[key] = e
        n = counts.get(key, 0)
        if n == 0:
            diags.append(f"boundary edge {e}: not an edge of any triangle")
        elif n > 1:
            diags.append(f"boundary edge {e}: non-manifold boundary (shared by {n} triangles)")
    for key, n in counts.items():
        if n == 1 and key not in declared:
            diags.append(f"untagged boundary edge {key}")
        if n > 2:
            diags.append(f"non-manifold edge {key} shared by {n} triangles")

    degree = np.bincount(mesh.boundary_edges.ravel(), minlength=nv)
    for v in np.flatnonzero((degree != 0) & (degree != 2)):
        diags.append(f"boundary vertex {v}: degree {degree[v]}, boundary is not a union of closed loops")

    if not mesh.tag_length(GAMMA0) > 0:
        diags.append("GAMMA0 measure zero")
    if not np.any(mesh.edge_tags == GAMMA1):
        diags.append("GAMMA1 empty")
    zero = np.flatnonzero(~(mesh.edge_lengths > 0))
    for e in zero:
        diags.append(f"boundary edge {e}: zero length")
    return diags


def build_dof_map(mesh: Mesh) -> DofMap:
    constrained = np.unique(mesh.edges_with_tag(GAMMA0))
    free = np.setdiff1d(np.arange(mesh.n_vertices), constrained)
    boundary = np.unique(mesh.edges_with_tag(GAMMA1))
    return DofMap(
        free_dofs=_frozen(free, np.int64),
        constrained_dofs=_frozen(constrained, np.int64),
        boundary_dofs=_frozen(boundary, np.int64),
        n_vertices=mesh.n_vertices,
    )


def save_mesh(mesh: Mesh) -> str:
    lines = [f"vertices {mesh.n_vertices}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {t}" for (i, j), t in zip(mesh.boundary_edges.tolist(), mesh.edge_tags.tolist())]
    return "\n".join(lines) + "\n"


def load_mesh(text: str, validate: bool = True) -> Mesh:
    """Parse the plain-text mesh format. Line numbers in errors are 1-based."""
    rows = [(n, ln.split()) for n, ln in enumerate(text.splitlines(), start=1)]
    rows = [(n, toks) for n, toks in rows if toks and not toks[0].startswith("#")]
    pos = 0

    def section(name: str, width: int, conv):
        nonlocal pos
        if pos >= len(rows):
            raise MeshError(f"missing '{name}' header", line=rows[-1][0] if rows else 1)
        n, toks = rows[pos]
        if len(toks) != 2 or toks[0] != name:
            raise MeshError(f"line {n}: expected '{name} <count>'", line=n)
        try:
            count = int(toks[1])
        except ValueError:
            raise MeshError(f"line {n}: bad count {toks[1]!r}", line=n) from None
        if count < 0:
            raise MeshError(f"line {n}: negative count", line=n)
        pos += 1
        out = []
        for _ in range(count):
            if pos >= len(rows):
                raise MeshError(f"section '{name}' truncated after line {rows[-1][0]}", line=rows[-1][0])
            n, toks = rows[pos]
            if len(toks) != width:
                raise MeshError(f"line {n}: expected {width} fields, got {len(toks)}", line=n)
            try:
                out.append([conv(t) for t in toks])
            except ValueError:
                raise MeshError(f"line {n}: cannot parse {' '.join(toks)!r}", line=n) from None
            pos += 1
        return out, n

    verts, _ = section("vertices", 2, float)
    tris, _ = section("triangles", 3, int)
    start = pos
    edges, _ = section("boundary_edges", 3, int)
    if pos != len(rows):
        n = rows[pos][0]
        raise MeshError(f"line {n}: unexpected trailing content", line=n)

    nv = len(verts)
    tri_start = start - len(tris)
    for k, t in enumerate(tris):
        if min(t) < 0 or max(t) >= nv:
            n = rows[tri_start + k][0]
            raise MeshError(f"line {n}: triangle vertex index out of range (have {nv} vertices)", line=n)
    for k, (a, b, t) in enumerate(edges):
        n = rows[start + 1 + k][0]
        if min(a, b) < 0 or max(a, b) >= nv:
            raise MeshError(f"line {n}: boundary edge vertex index out of range (have {nv} vertices)", line=n)
        if t not in (GAMMA0, GAMMA1):
            raise MeshError(f"line {n}: boundary tag must be 0 or 1, got {t}", line=n)

    e = np.array(edges, dtype=np.int64).reshape(-1, 3)
    mesh = Mesh(np.array(verts).reshape(-1, 2), np.array(tris).reshape(-1, 3), e[:, :2], e[:, 2])
    if validate:
        diags = validate_mesh(mesh)
        if diags:
            raise MeshError("mesh validation failed: " + "; ".join(diags), diagnostics=diags)
    return mesh


def annulus_rings(mesh: Mesh, n_theta: int) -> np.ndarray:
    """Ring index per vertex for meshes produced by :func:`generate_annulus_mesh`."""
    return np.arange(mesh.n_vertices) // n_theta
