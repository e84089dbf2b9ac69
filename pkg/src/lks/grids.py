"""Lattices, real-valued field snapshots, and their on-disk formats.

A ``Grid`` is either a periodic box (any dimension 1..3, power-of-two point
counts so the FFT path stays fast and exact) or the unit-style Dirichlet
interval in d = 1.  A ``Field`` is one real snapshot on a grid together with
its simulation time.  Snapshots serialize to CSV (one row per cell with its
coordinates) and to a raw little-endian binary with a small JSON header.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1

# Refuse to allocate lattices beyond this many cells (product over axes).
MAX_CELLS = 1 << 26

PERIODIC = "periodic"
DIRICHLET = "dirichlet"


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """A rectangular lattice on prod_i [0, L_i]."""

    dim: int
    extent: tuple[float, ...]
    points: tuple[int, ...]
    boundary: str = PERIODIC

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        object.__setattr__(self, "extent", tuple(float(L) for L in self.extent))
        object.__setattr__(self, "points", tuple(int(n) for n in self.points))
        if len(self.extent) != self.dim or len(self.points) != self.dim:
            raise ValueError("extent and points must have one entry per axis")
        if any(L <= 0 for L in self.extent):
            raise ValueError("extents must be positive")
        if any(n < 4 for n in self.points):
            raise ValueError("need at least 4 points per axis")
        if self.boundary not in (PERIODIC, DIRICHLET):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.boundary == PERIODIC and not all(_is_power_of_two(n) for n in self.points):
            raise ValueError("periodic grids require power-of-two point counts")
        if self.boundary == DIRICHLET and self.dim != 1:
            raise ValueError("Dirichlet grids are d=1 only")
        if self.cell_count > MAX_CELLS:
            raise ValueError(f"lattice of {self.cell_count} cells exceeds budget {MAX_CELLS}")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.extent, self.points))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def shape(self) -> tuple[int, ...]:
        # Dirichlet stores interior points only; sine modes live on N-1 nodes.
        if self.boundary == DIRICHLET:
            return (self.points[0] - 1,)
        return self.points

    def axes(self) -> list[np.ndarray]:
        """Node coordinates per axis (cell-centered at j*dx for periodic,
        interior nodes for Dirichlet)."""
        out = []
        for L, n, dx in zip(self.extent, self.points, self.spacing):
            if self.boundary == DIRICHLET:
                out.append(np.arange(1, n) * dx)
            else:
                out.append(np.arange(n) * dx)
        return out

    def meshgrid(self) -> list[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")


@dataclass
class Field:
    """One real-valued snapshot u(time, .) on a grid."""

    grid: Grid
    time: float
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        if self.time < 0:
            raise ValueError("time must be nonnegative")

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0) -> "Field":
        return cls(grid, time, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, f, time: float = 0.0) -> "Field":
        return cls(grid, time, f(*grid.meshgrid()))

    def copy(self) -> "Field":
        return Field(self.grid, self.time, self.values.copy())

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values**2) * self.grid.cell_volume))


@dataclass
class SpectralField:
    """Fourier-side working representation of a real field.

    For periodic grids ``coeffs`` follows numpy's rfftn layout (last axis
    halved), which encodes Hermitian symmetry structurally.  For Dirichlet
    grids ``coeffs`` holds DST-I sine coefficients.
    """

    grid: Grid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs)
        expected = spectral_shape(self.grid)
        if self.coeffs.shape != expected:
            raise ValueError(f"coeffs shape {self.coeffs.shape}, expected {expected}")

    def hermitian_defect(self) -> float:
        """Max |imag| of the represented physical field over its norm.

        rfftn layouts are Hermitian by construction except for the planes
        that must be self-conjugate; this measures the leakage there.
        """
        if self.grid.boundary == DIRICHLET:
            return 0.0
        full = np.fft.irfftn(self.coeffs, s=self.grid.points)
        back = np.fft.rfftn(full)
        scale = np.max(np.abs(self.coeffs)) or 1.0
        return float(np.max(np.abs(back - self.coeffs)) / scale)


def spectral_shape(grid: Grid) -> tuple[int, ...]:
    if grid.boundary == DIRICHLET:
        return grid.shape
    return grid.points[:-1] + (grid.points[-1] // 2 + 1,)


# ----------------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------------

def field_to_csv(f: Field, path, epsilon: float = 1.0, theta: float = 0.0) -> None:
    mesh = f.grid.meshgrid()
    cols = [m.ravel() for m in mesh] + [f.values.ravel()]
    header = ",".join([f"x{i}" for i in range(f.grid.dim)] + ["value"])
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(_header_dict(f, epsilon, theta)) + "\n")
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def field_from_csv(path) -> Field:
    with open(path) as fh:
        meta = json.loads(fh.readline().lstrip("# ").strip())
        fh.readline()  # column header
        data = np.loadtxt(fh, delimiter=",")
    grid = _grid_from_header(meta)
    values = np.atleast_2d(data)[:, -1].reshape(grid.shape)
    return Field(grid, meta["time"], values)


def _header_dict(f: Field, epsilon: float, theta: float) -> dict:
    return {
        "dim": f.grid.dim,
        "extents": list(f.grid.extent),
        "points": list(f.grid.points),
        "boundary": f.grid.boundary,
        "time": f.time,
        "epsilon": epsilon,
        "theta": theta,
        "format_version": FORMAT_VERSION,
    }


def _grid_from_header(meta: dict) -> Grid:
    return Grid(meta["dim"], tuple(meta["extents"]), tuple(meta["points"]), meta["boundary"])


def field_to_binary(f: Field, path, epsilon: float = 1.0, theta: float = 0.0) -> None:
    """JSON header (length-prefixed) followed by raw little-endian float64."""
    blob = json.dumps(_header_dict(f, epsilon, theta)).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(f.values.astype("<f8").tobytes())


def field_from_binary(path) -> Field:
    with open(path, "rb") as fh:
        (n,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(n).decode())
        if meta["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {meta['format_version']}")
        grid = _grid_from_header(meta)
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape(grid.shape)
    return Field(grid, meta["time"], raw.copy())
