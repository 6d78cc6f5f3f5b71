"""Parallel-beam tomography: phantom, geometry, and the hyperplane data.

The scanned object is a synthetic head section built from additive
ellipses; its digitization on a square pixel grid is the ground truth.
Line integrals are computed against that digitized image (pixel-basis
forward projection), so the phantom vector satisfies every generated
hyperplane exactly and the feasibility problem is consistent by
construction.

Coordinates are in cm.  The grid is centered at the origin: pixel
``(g, h)`` (row ``g`` counted from the top, column ``h`` from the left)
has its center at ``x = (h + 0.5 - W/2) * pixel_size`` and
``y = (H/2 - g - 0.5) * pixel_size``.  A ray with angle ``theta`` and
signed detector offset ``s`` is the line ``s*n + t*u`` with direction
``u = (cos theta, sin theta)`` and normal ``n = (-sin theta, cos theta)``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .convexsets import InvalidSetError
from .feasibility import FeasibilityProblem, HyperplanePack
from .objectives import GridImage, vectorize
from .operators import BlockScheme

DEFAULT_GRID = 243
DEFAULT_PIXEL_SIZE = 0.0752
DEFAULT_NUM_VIEWS = 82

SINOGRAM_MAGIC = "sinogram 1"
PHANTOM_MAGIC = "phantom 1"


@dataclass(frozen=True)
class Ellipse:
    """An additive ellipse: center, semi-axes, rotation, value per cm."""

    cx: float
    cy: float
    a: float
    b: float
    angle: float = 0.0
    value: float = 0.0

    def __post_init__(self):
        for name in ("cx", "cy", "a", "b", "angle", "value"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise InvalidSetError(f"ellipse field {name} must be finite")
            object.__setattr__(self, name, v)
        if self.a <= 0.0 or self.b <= 0.0:
            raise InvalidSetError("ellipse semi-axes must be positive")

    def contains(self, x, y):
        """Pointwise membership; broadcasts over coordinate arrays."""
        dx = x - self.cx
        dy = y - self.cy
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = c * dx + s * dy
        w = -s * dx + c * dy
        return (u / self.a) ** 2 + (w / self.b) ** 2 <= 1.0


# A synthetic head section: skull shell, brain, two angled ventricles and
# four small features, with pixel values (sums of overlapping ellipses)
# spanning [0, 0.5639].  Soft-tissue values sit in the display window
# used by the reconstruction reports.
SURROGATE_HEAD_ELLIPSES = (
    Ellipse(0.0, 0.0, 6.8, 8.7, 0.0, 0.5639),
    Ellipse(0.0, 0.0, 6.1, 8.0, 0.0, -0.3559),
    Ellipse(-1.3, 1.8, 0.7, 1.6, 0.25, -0.0030),
    Ellipse(1.3, 1.8, 0.7, 1.6, -0.25, -0.0030),
    Ellipse(0.0, -3.1, 1.1, 1.1, 0.0, 0.0040),
    Ellipse(2.2, -1.4, 0.45, 0.45, 0.0, 0.0060),
    Ellipse(-2.2, -1.4, 0.35, 0.35, 0.0, 0.0035),
    Ellipse(0.9, 3.9, 0.3, 0.55, 0.5, 0.0050),
)


@dataclass(frozen=True)
class PhantomSpec:
    """Square grid dimensions plus the additive ellipse list."""

    grid: int = DEFAULT_GRID
    pixel_size: float = DEFAULT_PIXEL_SIZE
    ellipses: tuple = ()
    value_range: tuple = (0.0, 0.5639)

    def __post_init__(self):
        if self.grid < 1:
            raise InvalidSetError("grid must be at least one pixel wide")
        if not (self.pixel_size > 0.0 and math.isfinite(self.pixel_size)):
            raise InvalidSetError("pixel size must be finite and positive")
        lo, hi = self.value_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise InvalidSetError("value range must be a finite (low, high) pair")
        object.__setattr__(self, "ellipses", tuple(self.ellipses))
        object.__setattr__(self, "value_range", (float(lo), float(hi)))

    @classmethod
    def surrogate_head(cls, grid=DEFAULT_GRID):
        """The built-in head section, rescaled to keep its physical size."""
        pixel = DEFAULT_PIXEL_SIZE * DEFAULT_GRID / grid
        return cls(grid=grid, pixel_size=pixel, ellipses=SURROGATE_HEAD_ELLIPSES)

    @property
    def width_cm(self):
        return self.grid * self.pixel_size


def pixel_centers(grid, pixel_size):
    """Center coordinate grids (x varying by column, y by row, top row first)."""
    half = grid / 2.0
    cols = (np.arange(grid) + 0.5 - half) * pixel_size
    rows = (half - np.arange(grid) - 0.5) * pixel_size
    return np.meshgrid(cols, rows)


def make_phantom(spec):
    """Digitize the spec on its grid: additive values at pixel centers."""
    x, y = pixel_centers(spec.grid, spec.pixel_size)
    values = np.zeros((spec.grid, spec.grid), dtype=np.float64)
    for e in spec.ellipses:
        values += np.where(e.contains(x, y), e.value, 0.0)
    lo, hi = spec.value_range
    if values.min() < lo - 1e-12 or values.max() > hi + 1e-12:
        raise InvalidSetError(
            f"phantom values [{values.min():g}, {values.max():g}] leave the "
            f"declared range [{lo:g}, {hi:g}]")
    return GridImage(values, spec.pixel_size)


def write_phantom_spec(spec, path):
    lines = [f"# {PHANTOM_MAGIC}",
             f"grid = {spec.grid}",
             f"pixel_size = {spec.pixel_size!r}",
             f"value_range = {spec.value_range[0]!r} {spec.value_range[1]!r}"]
    for e in spec.ellipses:
        lines.append(f"ellipse = {e.cx!r} {e.cy!r} {e.a!r} {e.b!r} {e.angle!r} {e.value!r}")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def read_phantom_spec(path):
    """Parse a key=value phantom file; unknown keys are rejected by name."""
    grid = DEFAULT_GRID
    pixel_size = DEFAULT_PIXEL_SIZE
    value_range = (0.0, 0.5639)
    ellipses = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidSetError(f"{path}:{lineno}: expected key = value")
            key, _, rest = line.partition("=")
            key = key.strip()
            parts = rest.split()
            try:
                if key == "grid":
                    (grid,) = parts
                    grid = int(grid)
                elif key == "pixel_size":
                    (pixel_size,) = parts
                    pixel_size = float(pixel_size)
                elif key == "value_range":
                    lo, hi = parts
                    value_range = (float(lo), float(hi))
                elif key == "ellipse":
                    ellipses.append(Ellipse(*(float(p) for p in parts)))
                else:
                    raise InvalidSetError(f"{path}:{lineno}: unknown key {key!r}")
            except (ValueError, TypeError) as exc:
                raise InvalidSetError(f"{path}:{lineno}: bad {key} entry: {exc}") from exc
    return PhantomSpec(grid=grid, pixel_size=pixel_size, ellipses=ellipses,
                       value_range=value_range)


@dataclass(frozen=True)
class ScanGeometry:
    """Equally spaced view angles over 180 degrees, symmetric detector bank.

    The detector fields default to ``None`` and are resolved against the
    image being scanned: spacing becomes the pixel size, and the ray count
    grows until the bank spans the grid's circumscribed circle, so every
    pixel is crossed by some ray of every view.  Pin either field for a
    different trade-off (a pinned narrow bank simply drops the rays that
    miss the grid).  At the 243-grid defaults this resolves to 344 rays
    per view of which about 310 survive per view after the drop.
    """

    num_views: int = DEFAULT_NUM_VIEWS
    rays_per_view: int = None
    detector_spacing: float = None

    def __post_init__(self):
        if self.num_views < 1:
            raise InvalidSetError("need at least one view")
        if self.rays_per_view is not None and self.rays_per_view < 1:
            raise InvalidSetError("need at least one ray per view")
        if self.detector_spacing is not None:
            spacing = float(self.detector_spacing)
            if not (spacing > 0.0 and math.isfinite(spacing)):
                raise InvalidSetError("detector spacing must be finite and positive")
            object.__setattr__(self, "detector_spacing", spacing)

    def angles(self):
        return np.arange(self.num_views) * (math.pi / self.num_views)

    def resolve(self, pixel_size, grid_width):
        """Fill unset detector fields for a concrete image."""
        spacing = self.detector_spacing
        if spacing is None:
            spacing = float(pixel_size)
        rays = self.rays_per_view
        if rays is None:
            rays = math.ceil(grid_width * math.sqrt(2.0) / spacing)
        return ScanGeometry(self.num_views, rays, spacing)

    def offsets(self):
        """Signed detector offsets of one view, symmetric about zero."""
        if self.rays_per_view is None or self.detector_spacing is None:
            raise InvalidSetError(
                "geometry has unresolved detector fields; resolve() it "
                "against an image first")
        m = np.arange(self.rays_per_view)
        return (m + 0.5 - self.rays_per_view / 2.0) * self.detector_spacing


def trace_ray(angle, offset, grid, pixel_size):
    """Pixel intersection lengths of one ray through the square grid.

    Returns ``(indices, lengths)``: strictly increasing flat row-major
    pixel indices and the positive chord lengths (cm) the line cuts
    through each.  A ray that misses the grid yields two empty arrays.
    The lengths telescope: their sum equals the ray's chord through the
    grid square up to roundoff.
    """
    if not (math.isfinite(angle) and math.isfinite(offset)):
        raise InvalidSetError("ray parameters must be finite")
    if grid < 1 or not (pixel_size > 0.0 and math.isfinite(pixel_size)):
        raise InvalidSetError("grid must be positive and pixel size finite positive")
    empty = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
    half = grid * pixel_size / 2.0
    ux, uy = math.cos(angle), math.sin(angle)
    px, py = -offset * math.sin(angle), offset * math.cos(angle)

    t_in, t_out = -math.inf, math.inf
    for p, u in ((px, ux), (py, uy)):
        if u == 0.0:
            if not -half <= p <= half:
                return empty
        else:
            ta, tb = (-half - p) / u, (half - p) / u
            t_in = max(t_in, min(ta, tb))
            t_out = min(t_out, max(ta, tb))
    if not (t_out > t_in and math.isfinite(t_in) and math.isfinite(t_out)):
        return empty

    # Parameter values where the line crosses interior grid lines.
    lines = -half + pixel_size * np.arange(1, grid)
    cuts = [np.array([t_in, t_out])]
    for p, u in ((px, ux), (py, uy)):
        if u != 0.0:
            t = (lines - p) / u
            cuts.append(t[(t > t_in) & (t < t_out)])
    t = np.sort(np.concatenate(cuts))
    lengths = np.diff(t)
    mids = 0.5 * (t[:-1] + t[1:])
    keep = lengths > 0.0
    lengths = lengths[keep]
    mids = mids[keep]
    if lengths.size == 0:
        return empty

    col = np.floor((px + mids * ux + half) / pixel_size).astype(np.int64)
    row = np.floor((half - (py + mids * uy)) / pixel_size).astype(np.int64)
    np.clip(col, 0, grid - 1, out=col)
    np.clip(row, 0, grid - 1, out=row)
    flat = row * grid + col
    uniq, inverse = np.unique(flat, return_inverse=True)
    summed = np.bincount(inverse, weights=lengths, minlength=uniq.size)
    return uniq, summed


@dataclass(frozen=True)
class TomoData:
    """A generated dataset: the problem, its provenance, and row labels.

    ``row_views``/``row_detectors`` map each kept hyperplane back to the
    (view, detector) pair it came from; rays that missed the grid are
    counted in ``n_dropped`` and absent from the problem.  The right-hand
    sides double as the sinogram values.
    """

    problem: FeasibilityProblem
    image: GridImage
    phantom: np.ndarray
    geometry: ScanGeometry
    detector_spacing: float
    row_views: np.ndarray
    row_detectors: np.ndarray
    n_dropped: int

    def __post_init__(self):
        for name in ("phantom", "row_views", "row_detectors"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def sinogram_values(self):
        return self.problem.packed.offset

    def view_blocks(self):
        """One block per view, detector order inside, view order across."""
        blocks = []
        for j in range(self.geometry.num_views):
            rows = np.nonzero(self.row_views == j)[0]
            if rows.size:
                blocks.append(rows)
        return BlockScheme(blocks)


def generate_data(img, geom):
    """Forward-project the digitized image into a consistent problem.

    Every ray of the geometry is traced through the image grid; rays
    with empty support are dropped, all others become hyperplane rows
    with right-hand side equal to the ray's line integral through the
    image, so the image vector solves the resulting problem exactly.
    """
    if img.width != img.height:
        raise InvalidSetError("ray geometry expects a square grid")
    grid = img.width
    width = grid * img.pixel_size
    geom = geom.resolve(img.pixel_size, width)
    x = vectorize(img)

    rows_idx = []
    rows_len = []
    views = []
    dets = []
    dropped = 0
    offsets = geom.offsets()
    for j, theta in enumerate(geom.angles()):
        for m in range(geom.rays_per_view):
            idx, lengths = trace_ray(theta, offsets[m], grid, img.pixel_size)
            if idx.size == 0:
                dropped += 1
                continue
            rows_idx.append(idx)
            rows_len.append(lengths)
            views.append(j)
            dets.append(m)
    if not rows_idx:
        raise InvalidSetError("every ray missed the grid; check the geometry")

    counts = np.fromiter((r.size for r in rows_idx), dtype=np.int64, count=len(rows_idx))
    indptr = np.zeros(len(rows_idx) + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate(rows_idx).astype(np.int32)
    data = np.concatenate(rows_len)
    prod = data * x[indices]
    b = np.add.reduceat(prod, indptr[:-1])
    norm_sq = np.add.reduceat(data * data, indptr[:-1])
    pack = HyperplanePack(indptr, indices, data, b, norm_sq, dim=grid * grid)
    return TomoData(
        problem=FeasibilityProblem.from_packed(pack),
        image=img,
        phantom=x,
        geometry=geom,
        detector_spacing=geom.detector_spacing,
        row_views=np.asarray(views, dtype=np.int32),
        row_detectors=np.asarray(dets, dtype=np.int32),
        n_dropped=dropped,
    )


def write_sinogram(path, views, detectors, values):
    """Write (view, detector, value) triples behind a small text header.

    The header is ASCII, one ``key value`` pair per line, closed by an
    ``end`` line; the payload is packed little-endian regardless of
    platform: two unsigned 32-bit labels and one 64-bit float per triple.
    """
    views = np.asarray(views, dtype=np.uint32)
    detectors = np.asarray(detectors, dtype=np.uint32)
    values = np.asarray(values, dtype=np.float64)
    if not (views.shape == detectors.shape == values.shape) or views.ndim != 1:
        raise InvalidSetError("sinogram columns must be equally long 1-D arrays")
    header = "\n".join([
        SINOGRAM_MAGIC,
        "fields view:u32 detector:u32 value:f64",
        f"count {views.size}",
        "endian little",
        "end",
    ]) + "\n"
    triples = np.empty(views.size,
                       dtype=[("view", "<u4"), ("detector", "<u4"), ("value", "<f8")])
    triples["view"] = views
    triples["detector"] = detectors
    triples["value"] = values
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(triples.tobytes())


def read_sinogram(path):
    """Inverse of :func:`write_sinogram`; returns (views, detectors, values)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    head, sep, _ = blob.partition(b"end\n")
    if not sep:
        raise InvalidSetError(f"{path}: missing sinogram header terminator")
    lines = head.decode("ascii").splitlines()
    if not lines or lines[0] != SINOGRAM_MAGIC:
        raise InvalidSetError(f"{path}: not a sinogram file")
    meta = dict(line.split(None, 1) for line in lines[1:] if line.strip())
    count = int(meta.get("count", "0"))
    payload = blob[len(head) + len(b"end\n"):]
    dtype = np.dtype([("view", "<u4"), ("detector", "<u4"), ("value", "<f8")])
    triples = np.frombuffer(payload, dtype=dtype, count=count)
    return (triples["view"].astype(np.int64),
            triples["detector"].astype(np.int64),
            triples["value"].astype(np.float64))
