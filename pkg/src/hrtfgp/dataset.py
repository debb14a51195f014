"""HRTF container types, spherical sampling grids, import/export, and a
deterministic spherical-head synthesizer so every experiment runs without
proprietary measurement data.

Coordinate convention for directions (unit vectors): x is left-right (left
positive), y is front-back (front positive), z is top-down (up positive).
Azimuth phi in (-pi, pi] rotates front toward left; elevation theta in
[-pi/2, pi/2] is the angle above the horizontal plane.
"""

import os
from dataclasses import dataclass

import numpy as np

from .container import ContainerError, read_blob, read_manifest, write_blob, write_manifest

SPEED_OF_SOUND = 343.0  # m/s

GRID_SCHEMES = ("cipic_like", "equiangular", "fibonacci")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Direction:
    """Unit vector in listener-centered coordinates."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        n = np.sqrt(self.x ** 2 + self.y ** 2 + self.z ** 2)
        if abs(n - 1.0) > 1e-9:
            raise DatasetError(f"direction norm {n} deviates from 1 by more than 1e-9")

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise DatasetError("zero vector has no direction")
        v = v / n
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def from_angles(cls, azimuth: float, elevation: float) -> "Direction":
        if not -np.pi < azimuth <= np.pi + 1e-12:
            raise DatasetError(f"azimuth {azimuth} outside (-pi, pi]")
        if not -np.pi / 2 - 1e-12 <= elevation <= np.pi / 2 + 1e-12:
            raise DatasetError(f"elevation {elevation} outside [-pi/2, pi/2]")
        ct = np.cos(elevation)
        return cls.from_vector(
            [ct * np.sin(azimuth), ct * np.cos(azimuth), np.sin(elevation)]
        )

    def to_angles(self):
        """(azimuth, elevation); azimuth is arbitrary (0) at the poles."""
        el = np.arcsin(np.clip(self.z, -1.0, 1.0))
        az = np.arctan2(self.x, self.y)
        if az <= -np.pi:
            az = np.pi
        return float(az), float(el)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class SphericalGrid:
    """Ordered direction list tagged with the generating scheme."""

    directions: tuple
    scheme: str

    def __post_init__(self):
        if self.scheme not in GRID_SCHEMES:
            raise DatasetError(f"unknown grid scheme {self.scheme!r}")
        mat = self.as_matrix()
        # pairwise angular separation must exceed 1e-6 rad
        cosines = np.clip(mat @ mat.T, -1.0, 1.0)
        np.fill_diagonal(cosines, -1.0)
        if cosines.size and np.arccos(cosines.max()) < 1e-6:
            raise DatasetError("grid contains directions closer than 1e-6 rad")

    def __len__(self):
        return len(self.directions)

    def as_matrix(self) -> np.ndarray:
        return np.array([d.as_array() for d in self.directions])


def cipic_like_grid() -> SphericalGrid:
    """1250-point grid mirroring the CIPIC layout: 25 lateral angles times 50
    polar steps in interaural coordinates.

    Lateral angle a (from the median plane, left positive) takes the CIPIC
    values {-80, -65, -55, -45:5:45, 55, 65, 80} degrees; the polar angle e
    sweeps -45 to 230.625 degrees in 5.625-degree steps, rotating front ->
    up -> back -> below around the interaural axis.
    """
    lateral = np.concatenate(
        [[-80.0, -65.0, -55.0], np.arange(-45.0, 50.0, 5.0), [55.0, 65.0, 80.0]]
    )
    polar = -45.0 + 5.625 * np.arange(50)
    dirs = []
    for a in np.deg2rad(lateral):
        for e in np.deg2rad(polar):
            x = np.sin(a)
            y = np.cos(a) * np.cos(e)
            z = np.cos(a) * np.sin(e)
            dirs.append(Direction.from_vector([x, y, z]))
    return SphericalGrid(tuple(dirs), "cipic_like")


def equiangular_grid(n_azimuth: int, n_elevation: int) -> SphericalGrid:
    az = np.linspace(-np.pi, np.pi, n_azimuth, endpoint=False) + np.pi / n_azimuth
    el = np.linspace(-np.pi / 2, np.pi / 2, n_elevation + 2)[1:-1]
    dirs = tuple(
        Direction.from_angles(a, e) for e in el for a in az
    )
    return SphericalGrid(dirs, "equiangular")


def fibonacci_grid(n: int) -> SphericalGrid:
    """Near-uniform spiral sampling of the sphere."""
    i = np.arange(n)
    golden = (1 + np.sqrt(5)) / 2
    z = 1 - (2 * i + 1) / n
    theta = 2 * np.pi * i / golden
    r = np.sqrt(np.clip(1 - z ** 2, 0, 1))
    dirs = tuple(
        Direction.from_vector([r[k] * np.cos(theta[k]), r[k] * np.sin(theta[k]), z[k]])
        for k in range(n)
    )
    return SphericalGrid(dirs, "fibonacci")


class HrtfSet:
    """Per-subject direction-indexed left/right magnitude and phase spectra.

    Directions are stored exactly as float32 rows (the container's wire
    format) so that import/export round-trips bit-exactly; `directions()`
    exposes the renormalized float64 view used by all numerics.
    """

    def __init__(self, subject_id, frequencies, directions_raw, left_mag, right_mag,
                 left_phase, right_phase, sample_rate_hz):
        if not subject_id:
            raise DatasetError("subject_id must be non-empty")
        self.subject_id = str(subject_id)
        self.frequencies = np.ascontiguousarray(frequencies, dtype=np.float32)
        self.directions_raw = np.ascontiguousarray(directions_raw, dtype=np.float32)
        self.left_mag = np.ascontiguousarray(left_mag, dtype=np.float32)
        self.right_mag = np.ascontiguousarray(right_mag, dtype=np.float32)
        self.left_phase = np.ascontiguousarray(left_phase, dtype=np.float32)
        self.right_phase = np.ascontiguousarray(right_phase, dtype=np.float32)
        self.sample_rate_hz = float(sample_rate_hz)
        self._validate()

    def _validate(self):
        n, d = self.left_mag.shape
        if n < 1 or d < 2:
            raise DatasetError(f"need N >= 1 and D >= 2, got N={n}, D={d}")
        for name in ("right_mag", "left_phase", "right_phase"):
            if getattr(self, name).shape != (n, d):
                raise DatasetError(f"{name} shape {getattr(self, name).shape} != {(n, d)}")
        if self.frequencies.shape != (d,):
            raise DatasetError(
                f"frequencies length {self.frequencies.shape} does not match D={d}"
            )
        if self.directions_raw.shape != (n, 3):
            raise DatasetError("directions must be N x 3")
        f = self.frequencies.astype(float)
        if f[0] < 0 or np.any(np.diff(f) <= 0):
            raise DatasetError("frequencies must be strictly increasing with first >= 0")
        for name in ("frequencies", "directions_raw", "left_mag", "right_mag",
                     "left_phase", "right_phase"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DatasetError(f"{name} contains non-finite values")
        if np.any(self.left_mag < 0) or np.any(self.right_mag < 0):
            raise DatasetError("magnitudes must be non-negative")
        if np.any(~self.left_mag.any(axis=1)) or np.any(~self.right_mag.any(axis=1)):
            raise DatasetError("magnitude rows must not be all zero")

    @property
    def n(self):
        return self.left_mag.shape[0]

    @property
    def d(self):
        return self.left_mag.shape[1]

    def directions(self) -> np.ndarray:
        """N x 3 float64 unit vectors."""
        d64 = self.directions_raw.astype(float)
        return d64 / np.linalg.norm(d64, axis=1, keepdims=True)

    def __eq__(self, other):
        if not isinstance(other, HrtfSet):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.sample_rate_hz == other.sample_rate_hz
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("frequencies", "directions_raw", "left_mag", "right_mag",
                          "left_phase", "right_phase")
            )
        )


def wrap_phase(phi):
    """Wrap angles into (-pi, pi]."""
    out = np.mod(-np.asarray(phi) + np.pi, 2 * np.pi)
    return -(out - np.pi)


def synth_sphere_hrtf(grid: SphericalGrid, head_radius: float, d: int,
                      sample_rate: float, subject_id: str = None) -> HrtfSet:
    """Deterministic rigid-sphere-style HRTF synthesizer.

    Magnitude uses a first-order scattering approximation: a frequency-
    dependent shadowing gain (ka)^2 / (1 + (ka)^2) modulating the cosine of
    the incidence angle at each ear (ears antipodal on the +-x axis), times
    ear-independent elevation and front-back cues (a pinna-style notch whose
    center frequency tracks z and scales inversely with head radius, and a
    shoulder-reflection ripple driven by y). Phase is a pure direction-
    dependent delay of -(a/c) cos(incidence). Same arguments give
    bit-identical output.
    """
    if not 0.05 <= head_radius <= 0.15:
        raise DatasetError(f"head_radius {head_radius} outside [0.05, 0.15] m")
    if d < 16:
        raise DatasetError("need at least 16 frequency bins")
    if sample_rate < 8000:
        raise DatasetError("sample_rate must be >= 8000 Hz")

    dirs = grid.as_matrix()
    freqs = np.linspace(0.0, sample_rate / 2.0, d)
    ka = 2 * np.pi * freqs * head_radius / SPEED_OF_SOUND
    shadow = ka ** 2 / (1.0 + ka ** 2)  # no ILD at low frequency

    x, y, z = dirs[:, 0:1], dirs[:, 1:2], dirs[:, 2:3]
    notch_hz = (7000.0 + 2500.0 * z) * (0.0875 / head_radius)
    notch = 1.0 - 0.7 * np.exp(-0.5 * ((freqs[None, :] - notch_hz) / 800.0) ** 2)
    # front-back cue encoded in the reflection delay, not the amplitude:
    # the comb position moves with y, which no linear readout can invert
    ripple = 1.0 + 0.3 * np.cos(2 * np.pi * freqs[None, :] * (0.30 + 0.08 * y) * 1e-3)
    # fine-grained per-bin spatial texture standing in for pinna/torso detail
    # that varies faster than typical grid spacing; deterministic by
    # construction (fixed generator seed, fixed draw order)
    tex_rng = np.random.default_rng(1859)
    tex_coef = tex_rng.uniform(8.0, 20.0, size=(3, d)) * \
        tex_rng.choice([-1.0, 1.0], size=(3, d))
    tex_phase = tex_rng.uniform(0.0, 2 * np.pi, size=d)
    texture = 1.0 + 0.12 * np.sin(dirs @ tex_coef + tex_phase[None, :])
    common = notch * ripple * texture

    mags = {}
    phases = {}
    for ear, axis in (("left", 1.0), ("right", -1.0)):
        cos_inc = axis * x  # incidence cosine at this ear
        base = 1.0 + 0.6 * shadow[None, :] * cos_inc
        mags[ear] = base * common
        delay = -(head_radius / SPEED_OF_SOUND) * cos_inc
        phases[ear] = wrap_phase(-2 * np.pi * freqs[None, :] * delay)

    return HrtfSet(
        subject_id or f"sphere-{head_radius:.4f}",
        freqs,
        dirs,
        mags["left"],
        mags["right"],
        phases["left"],
        phases["right"],
        sample_rate,
    )


_BLOB_FIELDS = ("frequencies", "left_mag", "right_mag", "left_phase",
                "right_phase", "directions")


def export_hrtf(hrtf: HrtfSet, manifest_path) -> None:
    """Write the manifest plus one f32 blob per matrix next to it."""
    base = os.path.splitext(os.path.basename(manifest_path))[0]
    directory = os.path.dirname(os.path.abspath(manifest_path))
    blobs = {name: f"{base}.{name}.f32" for name in _BLOB_FIELDS}
    manifest = {
        "subject_id": hrtf.subject_id,
        "n": int(hrtf.n),
        "d": int(hrtf.d),
        "sample_rate_hz": hrtf.sample_rate_hz,
        "blobs": blobs,
    }
    arrays = {
        "frequencies": hrtf.frequencies,
        "left_mag": hrtf.left_mag,
        "right_mag": hrtf.right_mag,
        "left_phase": hrtf.left_phase,
        "right_phase": hrtf.right_phase,
        "directions": hrtf.directions_raw,
    }
    for name, rel in blobs.items():
        write_blob(os.path.join(directory, rel), arrays[name])
    write_manifest(manifest_path, manifest)


def import_hrtf(manifest_path) -> HrtfSet:
    manifest = read_manifest(manifest_path)
    for key in ("subject_id", "n", "d", "sample_rate_hz", "blobs"):
        if key not in manifest:
            raise ContainerError(f"manifest missing field {key!r}")
    n, d = int(manifest["n"]), int(manifest["d"])
    directory = os.path.dirname(os.path.abspath(manifest_path))

    def load(name, shape):
        rel = manifest["blobs"].get(name)
        if rel is None:
            raise ContainerError(f"manifest missing blob entry {name!r}")
        return read_blob(os.path.join(directory, rel), shape, name)

    try:
        return HrtfSet(
            manifest["subject_id"],
            load("frequencies", (d,)),
            load("directions", (n, 3)),
            load("left_mag", (n, d)),
            load("right_mag", (n, d)),
            load("left_phase", (n, d)),
            load("right_phase", (n, d)),
            manifest["sample_rate_hz"],
        )
    except DatasetError as exc:
        raise ContainerError(str(exc))
