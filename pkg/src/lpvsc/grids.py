"""Uniform grids and grid-sampled functions.

All downstream machinery (norms, duality maps, frequency decompositions, the
elliptic solver) operates on real- or complex-valued samples over a uniform
rectangular grid.  Quadrature is the midpoint rule: every cell carries the
same measure, so integrals are plain sums scaled by ``cell_measure``.  Grid
resolutions are restricted to powers of two because the dyadic frequency
decomposition needs exact dyadic annuli on the discrete lattice.
"""

from __future__ import annotations

import struct

import numpy as np

_MAGIC = b"LPGF"
_VERSION = 1


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class Grid:
    """Uniform rectangular grid on a 1-D interval or a 2-D rectangle.

    Parameters
    ----------
    dimension : int
        1 or 2.
    points : int
        Number of cells per axis; must be a power of two.
    lengths : float or sequence of float
        Physical extent of each axis (a single float is broadcast).

    Notes
    -----
    Sample locations are cell centers, ``x_i = (i + 1/2) h``.  The measure of
    one cell is the product of the axis spacings and the total measure equals
    the product of the axis lengths.
    """

    def __init__(self, dimension: int, points: int, lengths=1.0):
        if dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {dimension}")
        if not _is_power_of_two(points):
            raise ValueError(f"points per axis must be a power of two, got {points}")
        if np.isscalar(lengths):
            lengths = (float(lengths),) * dimension
        lengths = tuple(float(L) for L in lengths)
        if len(lengths) != dimension:
            raise ValueError("one axis length per dimension required")
        if any(L <= 0 for L in lengths):
            raise ValueError("axis lengths must be positive")
        self.dimension = dimension
        self.points = int(points)
        self.lengths = lengths
        self.spacings = tuple(L / points for L in lengths)
        self.cell_measure = float(np.prod(self.spacings))

    @property
    def shape(self):
        return (self.points,) * self.dimension

    @property
    def size(self):
        return self.points**self.dimension

    @property
    def total_measure(self):
        return float(np.prod(self.lengths))

    def axes(self):
        """Cell-center coordinates along each axis."""
        return tuple(
            (np.arange(self.points) + 0.5) * h for h in self.spacings
        )

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.dimension == other.dimension
            and self.points == other.points
            and self.lengths == other.lengths
        )

    def __hash__(self):
        return hash((self.dimension, self.points, self.lengths))

    def __repr__(self):
        return f"Grid(dimension={self.dimension}, points={self.points}, lengths={self.lengths})"


class GridFunction:
    """Scalar function sampled on a :class:`Grid`, one value per cell."""

    def __init__(self, grid: Grid, values):
        values = np.asarray(values)
        if values.shape != grid.shape:
            raise ValueError(
                f"value shape {values.shape} does not match grid shape {grid.shape}"
            )
        if not np.iscomplexobj(values):
            values = values.astype(np.float64, copy=False)
        self.grid = grid
        self.values = values

    @classmethod
    def from_callable(cls, grid: Grid, fn):
        return cls(grid, fn(*grid.meshgrid()))

    @classmethod
    def constant(cls, grid: Grid, c):
        return cls(grid, np.full(grid.shape, c))

    @property
    def is_real(self):
        return not np.iscomplexobj(self.values)

    def copy(self):
        return GridFunction(self.grid, self.values.copy())

    def real(self):
        return GridFunction(self.grid, np.real(self.values))

    def _check_same_grid(self, other):
        if self.grid != other.grid:
            raise ValueError("grid mismatch between operands")

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_same_grid(other)
            return GridFunction(self.grid, self.values + other.values)
        return GridFunction(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, GridFunction):
            self._check_same_grid(other)
            return GridFunction(self.grid, self.values - other.values)
        return GridFunction(self.grid, self.values - other)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_same_grid(other)
            return GridFunction(self.grid, self.values * other.values)
        return GridFunction(self.grid, self.values * other)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return GridFunction(self.grid, self.values / scalar)

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def __repr__(self):
        return f"GridFunction({self.grid!r}, dtype={self.values.dtype})"


def save_gridfunction(f: GridFunction, path, mode: str = "binary") -> None:
    """Write a grid function to disk.

    The binary format is a small fixed header (magic, version, dimension,
    complex flag, points per axis, axis lengths) followed by the sample
    values as little-endian 64-bit floats in C order; complex data is stored
    as interleaved real/imaginary pairs.  The text format carries the same
    header as key/value lines followed by one value per line.
    """
    grid = f.grid
    is_complex = not f.is_real
    if mode == "binary":
        header = struct.pack(
            "<4sBBBI",
            _MAGIC,
            _VERSION,
            grid.dimension,
            1 if is_complex else 0,
            grid.points,
        )
        header += struct.pack(f"<{grid.dimension}d", *grid.lengths)
        payload = f.values.astype("<c16" if is_complex else "<f8").tobytes(order="C")
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    elif mode == "text":
        lines = [
            "# lpvsc gridfunction",
            f"version {_VERSION}",
            f"dimension {grid.dimension}",
            f"points {grid.points}",
            "lengths " + " ".join(format(L, ".17g") for L in grid.lengths),
            f"complex {int(is_complex)}",
        ]
        flat = f.values.ravel(order="C")
        if is_complex:
            lines.extend(
                format(v.real, ".17g") + " " + format(v.imag, ".17g") for v in flat
            )
        else:
            lines.extend(format(v, ".17g") for v in flat)
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        raise ValueError(f"unknown serialization mode {mode!r}")


def load_gridfunction(path) -> GridFunction:
    """Read a grid function written by :func:`save_gridfunction` (either mode)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == _MAGIC:
            version, dimension, is_complex, points = struct.unpack("<BBBI", fh.read(7))
            if version != _VERSION:
                raise ValueError(f"unsupported gridfunction version {version}")
            lengths = struct.unpack(f"<{dimension}d", fh.read(8 * dimension))
            grid = Grid(dimension, points, lengths)
            dtype = "<c16" if is_complex else "<f8"
            values = np.frombuffer(fh.read(), dtype=dtype).reshape(grid.shape)
            return GridFunction(grid, values.copy())
    # fall back to the text format
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# lpvsc gridfunction"):
            raise ValueError("not a gridfunction file")
        header = {}
        for _ in range(5):
            key, _, rest = fh.readline().strip().partition(" ")
            header[key] = rest
        dimension = int(header["dimension"])
        grid = Grid(
            dimension,
            int(header["points"]),
            tuple(float(t) for t in header["lengths"].split()),
        )
        is_complex = bool(int(header["complex"]))
        rows = [line.split() for line in fh if line.strip()]
        if is_complex:
            values = np.array([complex(float(a), float(b)) for a, b in rows])
        else:
            values = np.array([float(r[0]) for r in rows])
        return GridFunction(grid, values.reshape(grid.shape))
