"""Synthetic multipath CSI generator.

Each entry of the channel tensor is the coherent sum over propagation paths

    H[i, j, k](t) = sum_n a_n(t) * Phi[i, j]
                    * exp(-j 2 pi f_k (d_n / c + tau_i + sto + sfo * dfo))

with ``f_k = carrier_base + k * spacing``. A path flagged as moving is
amplitude-modulated as ``a_n (1 + depth sin(2 pi f_D t))`` and rotated by
``exp(j 2 pi f_D t)``; in a no-motion scenario the same path is frozen at its
``t = 0`` state. Circular Gaussian noise is added per sample.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0

DEFAULT_CARRIER_HZ = 5.18e9
DEFAULT_SPACING_HZ = 312.5e3
DEFAULT_SUBCARRIERS = 56
DEFAULT_SAMPLE_RATE = 100.0

# Ranges used by make_home. The "ood" regime is disjoint from "in" in path
# geometry, Doppler band, modulation depth and noise level.
REGIMES = {
    "in": dict(
        n_paths=(3, 8),
        path_length_m=(3.0, 30.0),
        amplitude=(0.05, 1.0),
        doppler_hz=(2.0, 40.0),
        modulation_depth=(0.3, 0.8),
        noise_ratio=0.05,
    ),
    "ood": dict(
        n_paths=(3, 8),
        path_length_m=(35.0, 60.0),
        amplitude=(0.05, 1.0),
        doppler_hz=(42.0, 48.0),
        modulation_depth=(0.02, 0.08),
        noise_ratio=0.3,
    ),
}


class Label(enum.IntEnum):
    NO_MOTION = 0
    MOTION = 1

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("-", "").replace("_", "")
            if key in ("motion", "1"):
                return cls.MOTION
            if key in ("nomotion", "0"):
                return cls.NO_MOTION
            raise ValueError(f"unknown label {value!r}")
        return cls(int(value))

    @property
    def display(self) -> str:
        return "Motion" if self is Label.MOTION else "NoMotion"


@dataclass(frozen=True)
class PathComponent:
    """One propagation path. Units: meters, Hz."""

    amplitude: float
    path_length: float
    moving: bool = False
    doppler_hz: float = 0.0
    modulation_depth: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ConfigError(f"path amplitude must be > 0, got {self.amplitude}")
        if self.path_length < 0:
            raise ConfigError(f"path length must be >= 0, got {self.path_length}")
        if (self.doppler_hz == 0) != (not self.moving):
            raise ConfigError("doppler_hz must be zero exactly when the path is static")
        if not 0.0 <= self.modulation_depth <= 1.0:
            raise ConfigError("modulation_depth must lie in [0, 1]")


@dataclass(frozen=True)
class ChannelConfig:
    n_tx: int
    n_rx: int
    n_subcarriers: int
    paths: tuple[PathComponent, ...]
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE
    carrier_base_hz: float = DEFAULT_CARRIER_HZ
    subcarrier_spacing_hz: float = DEFAULT_SPACING_HZ
    csd_delay_s: tuple[float, ...] = (0.0,)
    sto_s: float = 0.0
    sfo_ratio: float = 0.0
    freq_offset_ratio: float = 0.0
    # complex gains, shape (n_tx, n_rx); None means unit gain everywhere
    beamform_gain: np.ndarray | None = field(default=None, compare=False)
    noise_sigma: float = 0.0
    regime: str = "in"

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        object.__setattr__(self, "csd_delay_s", tuple(float(v) for v in self.csd_delay_s))
        if self.beamform_gain is None:
            gain = np.ones((self.n_tx, self.n_rx), dtype=complex)
        else:
            gain = np.asarray(self.beamform_gain, dtype=complex)
        object.__setattr__(self, "beamform_gain", gain)

    def validate(self) -> None:
        if min(self.n_tx, self.n_rx, self.n_subcarriers) < 1:
            raise ConfigError("n_tx, n_rx and n_subcarriers must all be >= 1")
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be positive")
        if len(self.csd_delay_s) != self.n_tx:
            raise ConfigError(
                f"csd_delay_s has {len(self.csd_delay_s)} entries for {self.n_tx} tx antennas"
            )
        if self.beamform_gain.shape != (self.n_tx, self.n_rx):
            raise ConfigError(
                f"beamform_gain shape {self.beamform_gain.shape} != {(self.n_tx, self.n_rx)}"
            )
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        nyquist = self.sample_rate_hz / 2
        for p in self.paths:
            if abs(p.doppler_hz) >= nyquist:
                raise ConfigError(
                    f"doppler {p.doppler_hz} Hz is at or above Nyquist ({nyquist} Hz)"
                )

    @property
    def frequencies(self) -> np.ndarray:
        k = np.arange(self.n_subcarriers)
        return self.carrier_base_hz + k * self.subcarrier_spacing_hz

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["paths"] = [dataclasses.asdict(p) for p in self.paths]
        d["csd_delay_s"] = list(self.csd_delay_s)
        g = self.beamform_gain
        d["beamform_gain"] = np.stack([g.real, g.imag], axis=-1).tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        d = dict(d)
        d["paths"] = tuple(PathComponent(**p) for p in d["paths"])
        g = np.asarray(d["beamform_gain"], dtype=float)
        d["beamform_gain"] = g[..., 0] + 1j * g[..., 1]
        d["csd_delay_s"] = tuple(d["csd_delay_s"])
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, ChannelConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None


@dataclass(frozen=True)
class MotionScenario:
    label: Label
    duration_s: float
    home_id: str = "home"

    def n_samples(self, sample_rate_hz: float) -> int:
        if not self.duration_s > 0:
            raise ConfigError("scenario duration must be positive")
        exact = self.duration_s * sample_rate_hz
        n = int(round(exact))
        if n < 1 or not np.isclose(n, exact, rtol=0, atol=1e-9):
            raise ConfigError(
                f"duration {self.duration_s} s at {sample_rate_hz} Hz is not a whole sample count"
            )
        return n


@dataclass
class CsiTensor:
    """Complex channel tensor with axes (tx, rx, subcarrier, sample)."""

    values: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 4:
            raise ConfigError(
                f"CSI tensor must be 4-D (tx, rx, sc, sample), got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("CSI tensor contains non-finite values")

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return tuple(int(v) for v in self.values.shape)


def synth_csi(config: ChannelConfig, scenario: MotionScenario, seed: int) -> CsiTensor:
    """Generate a CSI tensor for one recording.

    Parameters
    ----------
    config : ChannelConfig
        Channel geometry and impairments.
    scenario : MotionScenario
        Label and duration. Moving paths only move when the label is MOTION.
    seed : int
        Seed for the additive noise stream.

    Returns
    -------
    CsiTensor
        Shape ``(n_tx, n_rx, n_subcarriers, n_samples)``.
    """
    config.validate()
    n = scenario.n_samples(config.sample_rate_hz)
    label = Label.parse(scenario.label)
    fk = config.frequencies
    t = np.arange(n) / config.sample_rate_hz

    # common offset per tx antenna: tau_i + sto + sfo * dfo
    offsets = np.asarray(config.csd_delay_s) + config.sto_s + config.sfo_ratio * config.freq_offset_ratio
    gain = config.beamform_gain[:, :, None]

    static = np.zeros((config.n_tx, config.n_rx, config.n_subcarriers), dtype=complex)
    values = None
    for p in config.paths:
        delay = p.path_length / SPEED_OF_LIGHT + offsets  # (n_tx,)
        steer = np.exp(-2j * np.pi * fk[None, :] * delay[:, None])  # (n_tx, n_sc)
        term = p.amplitude * gain * steer[:, None, :]
        if p.moving and label is Label.MOTION:
            envelope = (1.0 + p.modulation_depth * np.sin(2 * np.pi * p.doppler_hz * t)) * np.exp(
                2j * np.pi * p.doppler_hz * t
            )
            moving = term[..., None] * envelope
            values = moving if values is None else values + moving
        else:
            static += term
    if values is None:
        values = np.broadcast_to(static[..., None], static.shape + (n,)).copy()
    else:
        values += static[..., None]

    if config.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        scale = config.noise_sigma / np.sqrt(2.0)
        values = values + scale * (
            rng.standard_normal(values.shape) + 1j * rng.standard_normal(values.shape)
        )
    return CsiTensor(values, config.sample_rate_hz)


def csi_amplitude(tensor: CsiTensor) -> np.ndarray:
    return np.abs(tensor.values)


def _home_rng(home_id: str, seed: int, salt: int = 0) -> np.random.Generator:
    # crc32 rather than hash(): str hashing is salted per process
    return np.random.default_rng([int(seed), zlib.crc32(home_id.encode()), salt])


def _log_uniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def make_home(
    home_id: str,
    seed: int,
    *,
    regime: str = "in",
    n_tx: int = 1,
    n_rx: int = 2,
    n_subcarriers: int = DEFAULT_SUBCARRIERS,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE,
    noise_ratio: float | None = None,
) -> ChannelConfig:
    """Draw a random scattering environment.

    The last path is the one a person moves along. Its Doppler and modulation
    depth are drawn from the regime's ranges; use :func:`redraw_motion` to
    vary them between recordings in the same home. ``noise_ratio`` overrides
    the regime's noise std relative to the RMS path amplitude.
    """
    if regime not in REGIMES:
        raise ConfigError(f"unknown regime {regime!r}; expected one of {sorted(REGIMES)}")
    r = REGIMES[regime]
    rng = _home_rng(home_id, seed)
    n_paths = int(rng.integers(r["n_paths"][0], r["n_paths"][1] + 1))
    lengths = np.sort(rng.uniform(*r["path_length_m"], size=n_paths))
    amps = _log_uniform(rng, *r["amplitude"], size=n_paths)
    doppler = float(rng.uniform(*r["doppler_hz"]))
    depth = float(rng.uniform(*r["modulation_depth"]))
    paths = [PathComponent(float(a), float(d)) for a, d in zip(amps[:-1], lengths[:-1])]
    paths.append(PathComponent(float(amps[-1]), float(lengths[-1]), True, doppler, depth))

    phases = rng.uniform(-np.pi, np.pi, size=(n_tx, n_rx))
    csd = -200e-9 * np.arange(n_tx)
    scale = float(np.sqrt(np.sum(amps**2)))
    return ChannelConfig(
        n_tx=n_tx,
        n_rx=n_rx,
        n_subcarriers=n_subcarriers,
        paths=tuple(paths),
        sample_rate_hz=sample_rate_hz,
        csd_delay_s=tuple(csd),
        sto_s=float(rng.uniform(-50e-9, 50e-9)),
        sfo_ratio=float(rng.uniform(-20e-6, 20e-6)),
        freq_offset_ratio=float(rng.uniform(-20e-6, 20e-6)),
        beamform_gain=np.exp(1j * phases),
        noise_sigma=(r["noise_ratio"] if noise_ratio is None else noise_ratio) * scale,
        regime=regime,
    )


def redraw_motion(config: ChannelConfig, seed: int) -> ChannelConfig:
    """Return ``config`` with fresh Doppler/depth for every moving path."""
    r = REGIMES[config.regime]
    rng = np.random.default_rng([int(seed), 0x6D6F76])
    paths = []
    for p in config.paths:
        if p.moving:
            p = dataclasses.replace(
                p,
                doppler_hz=float(rng.uniform(*r["doppler_hz"])),
                modulation_depth=float(rng.uniform(*r["modulation_depth"])),
            )
        paths.append(p)
    return dataclasses.replace(config, paths=tuple(paths))


# -- file format -------------------------------------------------------------


def write_csi(
    header_path: str | Path,
    tensor: CsiTensor,
    *,
    home_id: str,
    label,
    seed: int,
) -> dict:
    """Write a JSON header plus a sidecar little-endian float32 payload.

    The payload holds (real, imag) pairs in row-major (tx, rx, sc, sample)
    order and sits next to the header with a ``.bin`` suffix.
    """
    header_path = Path(header_path)
    payload_path = header_path.with_suffix(".bin")
    inter = np.empty(tensor.values.shape + (2,), dtype="<f4")
    inter[..., 0] = tensor.values.real
    inter[..., 1] = tensor.values.imag
    payload_path.write_bytes(inter.tobytes(order="C"))
    header = {
        "dims": list(tensor.dims),
        "sample_rate_hz": tensor.sample_rate_hz,
        "home_id": home_id,
        "label": Label.parse(label).display,
        "seed": int(seed),
        "payload": payload_path.name,
    }
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return header


def read_csi(header_path: str | Path) -> tuple[CsiTensor, dict]:
    header_path = Path(header_path)
    header = json.loads(header_path.read_text())
    missing = {"dims", "sample_rate_hz", "home_id", "label", "seed", "payload"} - set(header)
    if missing:
        raise ConfigError(f"{header_path}: CSI header lacks {sorted(missing)}")
    dims: Sequence[int] = header["dims"]
    raw = np.fromfile(header_path.parent / header["payload"], dtype="<f4")
    expected = int(np.prod(dims)) * 2
    if raw.size != expected:
        raise ConfigError(
            f"{header_path}: payload has {raw.size} floats, header dims imply {expected}"
        )
    raw = raw.reshape(tuple(dims) + (2,)).astype(float)
    tensor = CsiTensor(raw[..., 0] + 1j * raw[..., 1], float(header["sample_rate_hz"]))
    return tensor, header
