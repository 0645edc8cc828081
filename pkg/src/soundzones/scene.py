"""
Room and array geometry, acoustic transfer functions and target fields.

All transfer matrices are ordered bright rows first, then dark rows.
Random draws always go through an explicit ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Raised when an array element lies outside the room or overlaps another."""


class DegenerateSignalError(ValueError):
    """Raised when a target field would have zero signal power."""


@dataclass(frozen=True)
class SceneGeometry:
    room_dims: np.ndarray
    speaker_positions: np.ndarray  # (L, 3)
    bright_mics: np.ndarray  # (M_b, 3)
    dark_mics: np.ndarray  # (M_d, 3)
    validation_points: np.ndarray  # (M, 3), paired with control mics bright-first
    sound_speed: float = 343.0
    array_plane_height: float = 1.485

    def __post_init__(self):
        for name in ("room_dims", "speaker_positions", "bright_mics", "dark_mics",
                     "validation_points"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.room_dims.shape != (3,) or np.any(self.room_dims <= 0):
            raise GeometryError("room_dims must be three positive lengths")
        for name in ("speaker_positions", "bright_mics", "dark_mics"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
                raise GeometryError(f"{name} must be a non-empty (n, 3) array")
        for name in ("speaker_positions", "bright_mics", "dark_mics", "validation_points"):
            arr = getattr(self, name)
            if arr.size == 0:
                continue
            inside = np.all((arr > 0) & (arr < self.room_dims), axis=1)
            if not inside.all():
                idx = int(np.flatnonzero(~inside)[0])
                raise GeometryError(
                    f"{name}[{idx}] = {arr[idx].tolist()} is outside the room "
                    f"{self.room_dims.tolist()}")
        if self.validation_points.size:
            if self.validation_points.shape != (self.n_mics, 3):
                raise GeometryError("need exactly one validation point per control mic")
            dist = np.linalg.norm(
                self.validation_points[:, None, :] - self.control_mics[None, :, :], axis=-1)
            near = (dist <= 0.05).sum(axis=1)
            if np.any(near != 1):
                idx = int(np.flatnonzero(near != 1)[0])
                raise GeometryError(
                    f"validation_points[{idx}] is not within 0.05 m of exactly one control mic")

    @property
    def n_speakers(self) -> int:
        return self.speaker_positions.shape[0]

    @property
    def n_bright(self) -> int:
        return self.bright_mics.shape[0]

    @property
    def n_dark(self) -> int:
        return self.dark_mics.shape[0]

    @property
    def n_mics(self) -> int:
        return self.n_bright + self.n_dark

    @property
    def control_mics(self) -> np.ndarray:
        return np.vstack([self.bright_mics, self.dark_mics])

    def validation_scene(self) -> "SceneGeometry":
        """The same scene with the validation points acting as control mics."""
        return SceneGeometry(
            room_dims=self.room_dims,
            speaker_positions=self.speaker_positions,
            bright_mics=self.validation_points[:self.n_bright],
            dark_mics=self.validation_points[self.n_bright:],
            validation_points=np.empty((0, 3)),
            sound_speed=self.sound_speed,
            array_plane_height=self.array_plane_height,
        )


@dataclass(frozen=True)
class ATFMatrix:
    freq: float
    entries: np.ndarray  # (M, L) complex
    n_bright: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        object.__setattr__(self, "entries", entries)
        if entries.ndim != 2:
            raise ValueError("ATF entries must be a 2-D matrix")
        if not 1 <= self.n_bright < entries.shape[0]:
            raise ValueError(
                f"n_bright={self.n_bright} incompatible with {entries.shape[0]} rows")
        if not np.all(np.isfinite(entries)):
            raise ValueError("ATF entries must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def n_dark(self) -> int:
        return self.entries.shape[0] - self.n_bright

    @property
    def bright(self) -> np.ndarray:
        return self.entries[:self.n_bright]

    @property
    def dark(self) -> np.ndarray:
        return self.entries[self.n_bright:]


@dataclass(frozen=True)
class PerturbationModel:
    variance: float = 0.0707
    seed: int = 0

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("perturbation variance must be non-negative")


@dataclass(frozen=True)
class DesiredField:
    freq: float
    values: np.ndarray  # (M,) complex, bright first
    n_bright: int
    mode: str = "planewave"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=complex))
        if self.mode not in ("planewave", "oracle"):
            raise ValueError(f"unknown target mode {self.mode!r}")

    @property
    def bright(self) -> np.ndarray:
        return self.values[:self.n_bright]


# ---------------------------------------------------------------------------
# geometry

def _grid(center, rows, cols, spacing, height):
    xs = (np.arange(cols) - (cols - 1) / 2) * spacing
    ys = (np.arange(rows) - (rows - 1) / 2) * spacing
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel() + center[0], gy.ravel() + center[1],
                           np.full(gx.size, height)])
    return pts


def array_geometry(n_speakers=9, speaker_spacing=0.06, grid=(4, 4), mic_spacing=0.075,
                   standoff=2.0, zone_separation=1.0,
                   room_dims=(8.088, 7.346, 2.865), height=1.485,
                   validation_offset=(0.005, 0.005, 0.0), sound_speed=343.0):
    """
    Linear loudspeaker array facing two square microphone grids.

    The plan-view layout is centred in the room: the speaker line runs along
    x, and both zone centres sit ``standoff`` metres away along +y, split
    ``zone_separation`` metres apart (centre to centre) along x. The bright
    zone is on the -x side.

    Parameters
    ----------
    n_speakers : int
        Number of loudspeakers L.
    speaker_spacing : float
        Inter-element spacing of the loudspeaker line, meters.
    grid : (int, int)
        Microphone rows and columns per zone.
    mic_spacing : float
        Inter-element spacing inside each microphone grid, meters.
    standoff : float
        Distance between the speaker line and the zone centres, meters.
    zone_separation : float
        Distance between bright and dark zone centres, meters.
    validation_offset : 3-vector
        Offset added to every control mic to obtain its validation point.
    """
    if standoff <= 0:
        raise GeometryError("standoff must be positive")
    if n_speakers < 1 or grid[0] < 1 or grid[1] < 1:
        raise GeometryError("need at least one speaker and one mic per zone")
    room = np.asarray(room_dims, dtype=float)
    cx, cy = room[0] / 2, room[1] / 2
    y_spk = cy - standoff / 2
    y_zone = cy + standoff / 2
    xs = (np.arange(n_speakers) - (n_speakers - 1) / 2) * speaker_spacing + cx
    speakers = np.column_stack([xs, np.full(n_speakers, y_spk), np.full(n_speakers, height)])
    bright = _grid((cx - zone_separation / 2, y_zone), grid[0], grid[1], mic_spacing, height)
    dark = _grid((cx + zone_separation / 2, y_zone), grid[0], grid[1], mic_spacing, height)
    validation = np.vstack([bright, dark]) + np.asarray(validation_offset, dtype=float)
    return SceneGeometry(room_dims=room, speaker_positions=speakers, bright_mics=bright,
                         dark_mics=dark, validation_points=validation,
                         sound_speed=sound_speed, array_plane_height=height)


def reference_geometry(standoff=2.0, zone_separation=1.0, validation_offset=(0.005, 0.005, 0.0)):
    """Nine-speaker line and two 4x4 mic grids in an 8.088 x 7.346 x 2.865 m room."""
    return array_geometry(n_speakers=9, speaker_spacing=0.06, grid=(4, 4), mic_spacing=0.075,
                          standoff=standoff, zone_separation=zone_separation,
                          room_dims=(8.088, 7.346, 2.865), height=1.485,
                          validation_offset=validation_offset)


paper_geometry = reference_geometry


# ---------------------------------------------------------------------------
# transfer functions

def _distances(geom: SceneGeometry) -> np.ndarray:
    r = np.linalg.norm(geom.control_mics[:, None, :] - geom.speaker_positions[None, :, :],
                       axis=-1)
    if np.any(r == 0):
        m, l = np.argwhere(r == 0)[0]
        raise GeometryError(f"mic {m} coincides with speaker {l}")
    return r


def freefield_atf(geom: SceneGeometry, f: float) -> ATFMatrix:
    """Point-source Green's function exp(-j 2 pi f r / c) / (4 pi r) for every mic/speaker pair."""
    if f < 0:
        raise ValueError("frequency must be non-negative")
    r = _distances(geom)
    k = 2 * np.pi * f / geom.sound_speed
    return ATFMatrix(f, np.exp(-1j * k * r) / (4 * np.pi * r), geom.n_bright)


def sabine_absorption(room_dims, t60: float) -> float:
    """Uniform wall absorption coefficient giving reverberation time ``t60`` (Sabine)."""
    if t60 <= 0:
        raise ValueError("t60 must be positive")
    lx, ly, lz = room_dims
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    alpha = 0.161 * volume / (surface * t60)
    if not 0 < alpha <= 1:
        raise ValueError(f"t60={t60} s gives absorption {alpha:.4f} outside (0, 1]")
    return alpha


def image_source_atf(geom: SceneGeometry, f: float, t60: float = 0.2, fs: float = 8000.0,
                     window_len: int = 3200, max_order: int = 6,
                     absorption: float | None = None) -> ATFMatrix:
    """
    Single-bin ATFs from a rectangular-room image-source model.

    Each RIR is built with integer-sample delays (no fractional-delay filter)
    and truncated to ``window_len`` samples, then zero padded to the next power
    of two. The returned entry is the DFT bin nearest ``f`` of that padded
    response, evaluated directly as a sum over image sources.

    Parameters
    ----------
    t60 : float
        Reverberation time used to derive a uniform absorption via Sabine.
    max_order : int
        Largest number of wall reflections kept; 0 keeps the direct path only.
    absorption : float, optional
        Overrides the Sabine absorption coefficient, in (0, 1].
    """
    if f < 0 or f > fs / 2:
        raise ValueError(f"frequency {f} Hz is outside [0, fs/2] for fs={fs}")
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    alpha = sabine_absorption(geom.room_dims, t60) if absorption is None else absorption
    if not 0 < alpha <= 1:
        raise ValueError(f"absorption {alpha} outside (0, 1]")
    beta = np.sqrt(1.0 - alpha)
    n_fft = 1 << int(np.ceil(np.log2(window_len)))
    k_bin = int(round(f * n_fft / fs))

    room = geom.room_dims
    orders = np.arange(-max_order, max_order + 1)
    n = np.stack(np.meshgrid(orders, orders, orders, indexing="ij"), axis=-1).reshape(-1, 3)
    q = np.stack(np.meshgrid([0, 1], [0, 1], [0, 1], indexing="ij"), axis=-1).reshape(-1, 3)
    n = np.repeat(n, len(q), axis=0)
    q = np.tile(q, (len(orders) ** 3, 1))
    # reflections per axis: |n - q| off the origin wall, |n| off the far wall
    n_refl = (np.abs(n - q) + np.abs(n)).sum(axis=1)
    gain = beta ** n_refl if beta > 0 else (n_refl == 0).astype(float)
    keep = (gain > 0) & (n_refl <= max_order)
    n, q, gain = n[keep], q[keep], gain[keep]

    mics = geom.control_mics
    out = np.zeros((mics.shape[0], geom.n_speakers), dtype=complex)
    for l, src in enumerate(geom.speaker_positions):
        images = (1 - 2 * q) * src + 2 * n * room  # (I, 3)
        d = np.linalg.norm(mics[:, None, :] - images[None, :, :], axis=-1)  # (M, I)
        if np.any(d == 0):
            raise GeometryError(f"a mic coincides with speaker {l} or one of its images")
        delay = np.rint(d * fs / geom.sound_speed).astype(np.int64)
        amp = np.where(delay < window_len, gain / (4 * np.pi * d), 0.0)
        phase = np.exp(-2j * np.pi * k_bin * (delay % n_fft) / n_fft)
        out[:, l] = (amp * phase).sum(axis=1)
    return ATFMatrix(f, out, geom.n_bright)


# ---------------------------------------------------------------------------
# random draws

def circular_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circular complex Gaussian samples with total variance ``variance`` per entry."""
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def perturb_atf(H: ATFMatrix, pert: PerturbationModel, rng: np.random.Generator) -> ATFMatrix:
    """H plus fresh i.i.d. circular complex Gaussian noise; the input is left untouched."""
    if pert.variance == 0:
        return ATFMatrix(H.freq, H.entries.copy(), H.n_bright)
    noise = circular_gaussian(rng, H.shape, pert.variance)
    return ATFMatrix(H.freq, H.entries + noise, H.n_bright)


def sample_oracle_filter(L: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance circular complex Gaussian loudspeaker weights."""
    if L < 1:
        raise ValueError("L must be at least 1")
    return circular_gaussian(rng, L, 1.0)


# ---------------------------------------------------------------------------
# targets

def planewave_target(geom: SceneGeometry, f: float, direction=(0.0, 1.0, 0.0),
                     amplitude: float = 1.0) -> DesiredField:
    """Plane wave over the bright mics, silence over the dark mics."""
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1) > 1e-9:
        raise ValueError("plane-wave direction must be a unit vector")
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    k = 2 * np.pi * f / geom.sound_speed
    d = np.zeros(geom.n_mics, dtype=complex)
    d[:geom.n_bright] = amplitude * np.exp(-1j * k * (geom.bright_mics @ direction))
    return DesiredField(f, d, geom.n_bright, "planewave")


def oracle_target(H_n: ATFMatrix, g_o: np.ndarray, snr_db: float,
                  rng: np.random.Generator | None = None) -> DesiredField:
    """d = H_n g_o + z, with z scaled to the requested SNR over all control points."""
    g_o = np.asarray(g_o, dtype=complex)
    if g_o.shape != (H_n.shape[1],):
        raise ValueError(f"oracle filter length {g_o.shape} does not match L={H_n.shape[1]}")
    clean = H_n.entries @ g_o
    if np.isinf(snr_db) and snr_db > 0:
        return DesiredField(H_n.freq, clean, H_n.n_bright, "oracle")
    power = np.vdot(clean, clean).real
    if power == 0:
        raise DegenerateSignalError("H_n @ g_o is zero; SNR is undefined")
    noise_var = power / len(clean) / 10 ** (snr_db / 10)
    z = circular_gaussian(rng, len(clean), noise_var)
    return DesiredField(H_n.freq, clean + z, H_n.n_bright, "oracle")
