"""Minutiae extraction and elastic dynamic-programming minutiae matching.

Extraction uses the crossing-number rule on a thinned skeleton; matching
converts both minutiae sets to polar strings around a reference pair and
aligns them with an edit-distance style DP under elastic tolerances. The
raw similarity is m^2 / (n_T * n_P), normalized to [0, 1] via tanh(s/c).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .preprocessing import ForegroundMask, Skeleton

ENDING = "ending"
BIFURCATION = "bifurcation"

_TEMPLATE_MAGIC = "FPKIT-MINUTIAE"
_TEMPLATE_VERSION = 1


@dataclass(frozen=True)
class Minutia:
    """A ridge ending or bifurcation with its ridge-flow direction.

    Coordinates are pixels (x = column, y = row, y grows downward);
    direction is the flow leaving the point, radians in [0, 2*pi).
    """

    x: float
    y: float
    direction: float
    kind: str

    def __post_init__(self):
        if self.kind not in (ENDING, BIFURCATION):
            raise ValueError(f"unknown minutia kind {self.kind!r}")
        object.__setattr__(self, "direction", float(self.direction) % (2.0 * math.pi))


@dataclass(frozen=True)
class MinutiaeTemplate:
    minutiae: tuple[Minutia, ...]
    source_width: int
    source_height: int

    def __post_init__(self):
        object.__setattr__(self, "minutiae", tuple(self.minutiae))

    def __len__(self) -> int:
        return len(self.minutiae)


@dataclass(frozen=True)
class MatchParams:
    """Tunables of the DP matcher. Angles in degrees, distances in pixels."""

    min_distance: float = 6.0        # merge radius for neighbouring minutiae
    trace_length: int = 10           # ridge-walk length for direction estimation
    ref_angle_tolerance_deg: float = 30.0
    tol_radius: float = 8.0
    tol_azimuth_deg: float = 6.0
    tol_direction_deg: float = 20.0
    weight_radius: float = 1.0       # cost per pixel of |dr|
    weight_azimuth: float = 40.0     # cost per radian of |de|
    weight_direction: float = 20.0   # cost per radian of |dtheta|
    skip_penalty: float = 25.0
    ref_pair_cap: int | None = 30    # None disables the cap
    c_m: float = 0.35


def _wrap_pi(a: np.ndarray | float) -> np.ndarray | float:
    """Wrap angle difference into [-pi, pi)."""
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def crossing_numbers(skel: np.ndarray) -> np.ndarray:
    """Crossing number per pixel: 0.5 * sum |P_i - P_{i+1}| around the 8-neighbourhood."""
    s = np.asarray(skel, dtype=bool)
    padded = np.pad(s, 1, mode="constant", constant_values=False).astype(np.int8)
    # cyclic neighbour ring, clockwise from north
    ring = [
        padded[:-2, 1:-1], padded[:-2, 2:], padded[1:-1, 2:], padded[2:, 2:],
        padded[2:, 1:-1], padded[2:, :-2], padded[1:-1, :-2], padded[:-2, :-2],
    ]
    cn = np.zeros(s.shape, dtype=np.int8)
    for k in range(8):
        cn += np.abs(ring[k] - ring[(k + 1) % 8])
    return cn // 2


def _walk_ridge(skel: np.ndarray, y: int, x: int, steps: int,
                forbidden: set[tuple[int, int]] | None = None
                ) -> list[tuple[int, int]]:
    """Pixels visited following the ridge from (y, x), up to `steps` moves."""
    h, w = skel.shape
    visited = {(y, x)}
    if forbidden:
        visited |= forbidden
    path = []
    cy, cx = y, x
    for _ in range(steps):
        nxt = []
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == 0 and dx == 0:
                    continue
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < h and 0 <= nx < w and skel[ny, nx] and (ny, nx) not in visited:
                    nxt.append((ny, nx))
        if len(nxt) != 1:  # dead end or a crossing: stop the walk
            break
        cy, cx = nxt[0]
        path.append(nxt[0])
        visited.add(nxt[0])
    return path


def _path_bearing(y: int, x: int, path: list[tuple[int, int]]) -> float:
    """Bearing from (y, x) to the centroid of a traced path.

    The centroid damps the one-pixel quantization wiggle of the walk, which
    an endpoint-only bearing would inherit.
    """
    cy = sum(p[0] for p in path) / len(path)
    cx = sum(p[1] for p in path) / len(path)
    return math.atan2(cy - y, cx - x) % (2.0 * math.pi)


def _ending_direction(skel: np.ndarray, y: int, x: int, steps: int) -> float | None:
    path = _walk_ridge(skel, y, x, steps)
    if not path:
        return None
    return _path_bearing(y, x, path)


def _branch_directions(skel: np.ndarray, y: int, x: int, steps: int) -> list[float]:
    """Direction of every branch leaving (y, x), measured from (y, x) itself."""
    h, w = skel.shape
    dirs = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            ny, nx = y + dy, x + dx
            if not (0 <= ny < h and 0 <= nx < w and skel[ny, nx]):
                continue
            path = [(ny, nx)] + _walk_ridge(skel, ny, nx, steps - 1, forbidden={(y, x)})
            dirs.append(_path_bearing(y, x, path))
    return dirs


def _bifurcation_direction(dirs: list[float]) -> float:
    """Fork direction: sum of the two most-parallel branch vectors."""
    if len(dirs) < 2:
        return dirs[0] if dirs else 0.0
    best = None
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            dot = math.cos(dirs[i] - dirs[j])
            if best is None or dot > best[0]:
                best = (dot, i, j)
    _, i, j = best
    vx = math.cos(dirs[i]) + math.cos(dirs[j])
    vy = math.sin(dirs[i]) + math.sin(dirs[j])
    return math.atan2(vy, vx) % (2.0 * math.pi)


def extract_minutiae(skel: Skeleton, mask: ForegroundMask,
                     params: MatchParams = MatchParams()) -> MinutiaeTemplate:
    """Crossing-number minutiae extraction with border and proximity filtering.

    CN = 1 yields an ending, CN = 3 a bifurcation. Minutiae within one block
    of the mask border are discarded; pairs closer than min_distance are both
    removed. Directions come from tracing the skeleton trace_length pixels.
    """
    px = skel.pixels
    h, w = px.shape
    cn = crossing_numbers(px)
    candidates = []
    for kind, value in ((ENDING, 1), (BIFURCATION, 3)):
        ys, xs = np.nonzero(px & (cn == value))
        candidates.extend((int(y), int(x), kind) for y, x in zip(ys, xs))
    candidates.sort()

    # drop anything whose block, or any neighbouring block, is background
    blocks = mask.blocks
    bs = mask.block_size
    rows, cols = blocks.shape
    kept = []
    for y, x, kind in candidates:
        bi, bj = y // bs, x // bs
        interior = True
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ni, nj = bi + di, bj + dj
                if not (0 <= ni < rows and 0 <= nj < cols) or not blocks[ni, nj]:
                    interior = False
        if interior:
            kept.append((y, x, kind))

    # merge-by-removal of close pairs
    if kept:
        pts = np.array([(x, y) for y, x, _ in kept], dtype=float)
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        crowded = (d2 < params.min_distance ** 2).any(axis=1)
        kept = [m for m, bad in zip(kept, crowded) if not bad]

    minutiae = []
    for y, x, kind in kept:
        if kind == ENDING:
            d = _ending_direction(px, y, x, params.trace_length)
            if d is None:
                continue
        else:
            dirs = _branch_directions(px, y, x, params.trace_length)
            if not dirs:
                continue
            d = _bifurcation_direction(dirs)
        minutiae.append(Minutia(float(x), float(y), d, kind))
    return MinutiaeTemplate(tuple(minutiae), source_width=w, source_height=h)


def _polar_strings(template: MinutiaeTemplate, ref: int) -> np.ndarray:
    """(n-1, 3) array of (radius, azimuth, relative direction), azimuth-sorted.

    Angles are measured relative to the reference direction, which makes the
    representation invariant to rigid motion of the whole constellation.
    """
    ms = template.minutiae
    r = ms[ref]
    rows = []
    for k, m in enumerate(ms):
        if k == ref:
            continue
        dx, dy = m.x - r.x, m.y - r.y
        radius = math.hypot(dx, dy)
        azimuth = (math.atan2(dy, dx) - r.direction) % (2.0 * math.pi)
        rel_dir = (m.direction - r.direction) % (2.0 * math.pi)
        rows.append((radius, azimuth, rel_dir))
    arr = np.asarray(rows, dtype=float).reshape(-1, 3)
    order = np.lexsort((arr[:, 0], arr[:, 1]))  # azimuth, then radius for ties
    return arr[order]


def _dp_match_count(a: np.ndarray, b: np.ndarray, p: MatchParams) -> int:
    """Matched pairs from DP string alignment of two polar strings."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return 0
    dr = np.abs(a[:, 0:1] - b[None, :, 0])
    de = np.abs(_wrap_pi(a[:, 1:2] - b[None, :, 1]))
    dt = np.abs(_wrap_pi(a[:, 2:3] - b[None, :, 2]))
    cost = p.weight_radius * dr + p.weight_azimuth * de + p.weight_direction * dt
    ok = ((dr <= p.tol_radius)
          & (de <= math.radians(p.tol_azimuth_deg))
          & (dt <= math.radians(p.tol_direction_deg)))

    skip = p.skip_penalty
    dp = np.empty((n + 1, m + 1))
    dp[0, :] = np.arange(m + 1) * skip
    dp[:, 0] = np.arange(n + 1) * skip
    js = np.arange(m)
    for i in range(1, n + 1):
        diag = dp[i - 1, :-1] + cost[i - 1]
        up = dp[i - 1, 1:] + skip
        best = np.minimum(diag, up)
        # resolve the within-row left-to-right dependency as a prefix scan:
        # dp[i, j] = min_k<=j best[k] + (j - k) * skip
        dp[i, 1:] = js * skip + np.minimum.accumulate(best - js * skip)
        dp[i, 0] = i * skip

    # backtrack by locally re-minimizing (the scan's float rounding can be an
    # ulp off the recomputed sums, so exact equality tests are not reliable);
    # ties prefer diagonal, then template skip, then probe skip
    matched = 0
    i, j = n, m
    while i > 0 and j > 0:
        diag_v = dp[i - 1, j - 1] + cost[i - 1, j - 1]
        up_v = dp[i - 1, j] + skip
        left_v = dp[i, j - 1] + skip
        if diag_v <= up_v and diag_v <= left_v:
            if ok[i - 1, j - 1]:
                matched += 1
            i -= 1
            j -= 1
        elif up_v <= left_v:
            i -= 1
        else:
            j -= 1
    return matched


def _reference_pairs(template: MinutiaeTemplate, probe: MinutiaeTemplate,
                     p: MatchParams) -> list[tuple[int, int]]:
    tol = math.radians(p.ref_angle_tolerance_deg)
    t_dirs = np.array([m.direction for m in template.minutiae])
    p_dirs = np.array([m.direction for m in probe.minutiae])
    diff = np.abs(_wrap_pi(t_dirs[:, None] - p_dirs[None, :]))
    pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(diff <= tol))]
    if p.ref_pair_cap is None or len(pairs) <= p.ref_pair_cap:
        return pairs
    # rank by direction agreement first (the most informative compatibility
    # signal), then prefer anchors central to their constellations so the
    # remaining points stay spread around the reference
    t_pts = np.array([(m.x, m.y) for m in template.minutiae])
    p_pts = np.array([(m.x, m.y) for m in probe.minutiae])
    t_cent = np.linalg.norm(t_pts - t_pts.mean(axis=0), axis=1)
    p_cent = np.linalg.norm(p_pts - p_pts.mean(axis=0), axis=1)
    ranked = sorted(pairs, key=lambda ij: (diff[ij], t_cent[ij[0]] + p_cent[ij[1]], ij))
    return ranked[:p.ref_pair_cap]


def match_minutiae(template: MinutiaeTemplate, probe: MinutiaeTemplate,
                   params: MatchParams = MatchParams()) -> float:
    """Raw minutiae similarity s = max over reference pairings of m^2/(n_T*n_P).

    For each angularly compatible reference pair, both sets become polar
    strings around the reference (which itself counts as one matched pair)
    and are aligned by DP; aligned pairs within all elastic tolerances count
    toward m. Returns 0.0 when either template is empty.
    """
    n_t, n_p = len(template), len(probe)
    if n_t == 0 or n_p == 0:
        return 0.0
    best = 0
    strings_t: dict[int, np.ndarray] = {}
    strings_p: dict[int, np.ndarray] = {}
    for i, j in _reference_pairs(template, probe, params):
        a = strings_t.setdefault(i, _polar_strings(template, i))
        b = strings_p.setdefault(j, _polar_strings(probe, j))
        m = 1 + _dp_match_count(a, b, params)
        if m > best:
            best = m
            if best >= min(n_t, n_p):
                break
    return best * best / (n_t * n_p)


def normalize_minutiae_score(s_m: float, c_m: float = MatchParams.c_m) -> float:
    """tanh(s/c) similarity in [0, 1); strictly increasing in s."""
    if c_m <= 0:
        raise ValueError("normalization parameter c_m must be positive")
    if s_m < 0:
        raise ValueError("raw minutiae score must be non-negative")
    return math.tanh(s_m / c_m)


def save_template(template: MinutiaeTemplate, path: str | Path) -> None:
    """Line-oriented text serialization: header, dimensions, one minutia per line."""
    lines = [f"{_TEMPLATE_MAGIC} {_TEMPLATE_VERSION}",
             f"{template.source_width} {template.source_height}"]
    for m in template.minutiae:
        lines.append(f"{m.x:.12g} {m.y:.12g} {math.degrees(m.direction):.12g} {m.kind}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def load_template(path: str | Path) -> MinutiaeTemplate:
    text = Path(path).read_text(encoding="ascii").splitlines()
    if not text or not text[0].startswith(_TEMPLATE_MAGIC):
        raise ValueError(f"{path}: not a minutiae template file")
    version = int(text[0].split()[1])
    if version != _TEMPLATE_VERSION:
        raise ValueError(f"{path}: unsupported template version {version}")
    width, height = (int(v) for v in text[1].split())
    minutiae = []
    for line in text[2:]:
        if not line.strip():
            continue
        xs, ys, ds, kind = line.split()
        minutiae.append(Minutia(float(xs), float(ys),
                                math.radians(float(ds)), kind))
    return MinutiaeTemplate(tuple(minutiae), width, height)
