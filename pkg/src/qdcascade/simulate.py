"""Pulse-by-pulse Monte Carlo simulation of a blinking cascaded pair source.

Model per excitation pulse (repetition period ``rep_period``):

1. a two-state telegraph process (exponential dwell times ``blink_tau_on``
   and ``blink_tau_off``) decides whether the emitter is active;
2. an active pulse produces a photon-pair cascade with probability
   ``eta_prep`` given by the Rabi curve at the configured pulse area;
3. a successful cascade is followed, with probability ``p_m``, by a second
   cascade starting ``reexc_delay`` after the pulse;
4. each cascade emits an XX photon after an Exp(tau_xx) delay and an X
   photon an Exp(tau_x) delay later; the joint polarization of each
   cascade's pair is drawn from ``rho0`` (cascades in the same pulse are
   sampled independently, so cross-cascade coincidences are unpolarized);
5. photons are routed per measurement mode (50/50 splitter for HBT, one
   detector per line for cross-correlation, projective pass/reflect analysis
   for polarized mode), thinned by per-channel detector efficiency, and
   merged with uniform dark counts.

The pulse train is simulated in contiguous blocks.  Each block uses an RNG
seeded from ``(seed, block_index)`` and redraws the telegraph state from its
stationary distribution, an approximation that is negligible for blocks much
longer than the blink correlation time.  Within a block the random draws
follow a fixed documented order (telegraph dwells, emission uniforms,
re-excitation uniforms, decay exponentials, routing uniforms, jitter, dark
counts), which makes event streams bit-reproducible for a fixed
``(seed, block_size)``.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import polarization
from .errors import ConfigError, DataError
from .model import DEFAULT_RABI, RabiCurveParams, prep_fidelity_model

PS_PER_SECOND = 1_000_000_000_000


class Channel(IntEnum):
    X_A = 0
    X_B = 1
    XX_A = 2
    XX_B = 3
    X_PASS = 4
    X_REFLECT = 5
    XX_PASS = 6
    XX_REFLECT = 7


MODES = ("hbt_x", "hbt_xx", "cross_corr", "polarized")
MODE_IDS = {name: i for i, name in enumerate(MODES)}

#: channels read out in each measurement mode
ACTIVE_CHANNELS = {
    "hbt_x": (Channel.X_A, Channel.X_B),
    "hbt_xx": (Channel.XX_A, Channel.XX_B),
    "cross_corr": (Channel.X_A, Channel.XX_A),
    "polarized": (
        Channel.X_PASS,
        Channel.X_REFLECT,
        Channel.XX_PASS,
        Channel.XX_REFLECT,
    ),
}


@dataclass(frozen=True)
class MeasurementConfig:
    """Measurement mode and, for polarized mode, the projection settings."""

    mode: str
    setting_x: str = "H"
    setting_xx: str = "H"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown measurement mode {self.mode!r}")
        if self.mode == "polarized":
            for s in (self.setting_x, self.setting_xx):
                if s not in polarization.BASIS_LABELS:
                    raise ConfigError(f"unknown polarization setting {s!r}")

    @property
    def channels(self) -> tuple[Channel, ...]:
        return ACTIVE_CHANNELS[self.mode]


def blink_times_for(eta_blink: float, tau_corr: float) -> tuple[float, float]:
    """Telegraph dwell times giving the requested on-fraction and
    correlation time: tau_on = tau_c / (1 - eta), tau_off = tau_c / eta."""
    if not 0.0 < eta_blink < 1.0:
        raise ValueError(f"eta_blink must be in (0, 1), got {eta_blink}")
    if tau_corr <= 0.0:
        raise ValueError(f"tau_corr must be > 0, got {tau_corr}")
    return tau_corr / (1.0 - eta_blink), tau_corr / eta_blink


@dataclass(eq=False)
class EmitterParams:
    """Full physical parameter set of the simulated source and detectors.

    Times are seconds.  ``det_eff`` and ``dark_rate`` accept either a scalar
    (applied to every channel) or a mapping keyed by channel name.
    """

    seed: int
    p_m: float = 5.6e-4
    theta: float = math.pi
    rabi: RabiCurveParams = DEFAULT_RABI
    blink_tau_on: float = 1.6e-6 / 0.71
    blink_tau_off: float = 1.6e-6 / 0.29
    rep_period: float = 12.5e-9
    tau_xx: float = 120e-12
    tau_x: float = 270e-12
    det_eff: float | dict = 0.05
    dark_rate: float | dict = 0.0
    rho0: np.ndarray = field(default_factory=lambda: polarization.dephased_bell(0.89))
    reexc_delay: float = 10e-12
    jitter_sigma: float = 0.0

    @property
    def eta_prep(self) -> float:
        return prep_fidelity_model(self.theta, self.rabi)

    @property
    def eta_blink(self) -> float:
        if self.blink_tau_off == 0.0:
            return 1.0
        return self.blink_tau_on / (self.blink_tau_on + self.blink_tau_off)

    @property
    def blink_corr_time(self) -> float:
        """Telegraph correlation time 1 / (1/tau_on + 1/tau_off)."""
        if self.blink_tau_off == 0.0:
            return math.inf
        return (self.blink_tau_on * self.blink_tau_off) / (
            self.blink_tau_on + self.blink_tau_off
        )

    def efficiency(self, channel: Channel) -> float:
        if isinstance(self.det_eff, dict):
            return float(self.det_eff[channel.name])
        return float(self.det_eff)

    def dark(self, channel: Channel) -> float:
        if isinstance(self.dark_rate, dict):
            return float(self.dark_rate.get(channel.name, 0.0))
        return float(self.dark_rate)

    @property
    def rep_period_ps(self) -> int:
        return int(round(self.rep_period * PS_PER_SECOND))

    def validate(self, config: MeasurementConfig | None = None) -> None:
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if not 0.0 <= self.p_m < 1.0:
            raise ValueError(f"p_m must be in [0, 1), got {self.p_m}")
        if self.theta < 0.0:
            raise ValueError("pulse area theta must be >= 0")
        for name in ("blink_tau_on", "rep_period", "tau_xx", "tau_x"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.blink_tau_off < 0.0:
            raise ValueError("blink_tau_off must be >= 0 (0 disables blinking)")
        if self.reexc_delay < 0.0 or self.jitter_sigma < 0.0:
            raise ValueError("reexc_delay and jitter_sigma must be >= 0")
        rep_ps = self.rep_period * PS_PER_SECOND
        if abs(rep_ps - round(rep_ps)) > 1e-6:
            raise ValueError("rep_period must be an integer number of picoseconds")
        channels = config.channels if config is not None else tuple(Channel)
        for ch in channels:
            eff = self.efficiency(ch)
            if not 0.0 <= eff <= 1.0:
                raise ValueError(f"det_eff[{ch.name}] must be in [0, 1], got {eff}")
            if self.dark(ch) < 0.0:
                raise ValueError(f"dark_rate[{ch.name}] must be >= 0")
        polarization.require_valid(self.rho0)

    def digest(self, config: MeasurementConfig, n_pulses: int, block_size: int) -> str:
        """Hex digest identifying params + measurement + run size."""
        payload = {
            "seed": int(self.seed),
            "p_m": self.p_m,
            "theta": self.theta,
            "rabi": [self.rabi.amplitude, self.rabi.damping],
            "blink": [self.blink_tau_on, self.blink_tau_off],
            "rep_period": self.rep_period,
            "tau": [self.tau_xx, self.tau_x],
            "det_eff": self.det_eff,
            "dark_rate": self.dark_rate,
            "rho0": [self.rho0.real.tolist(), self.rho0.imag.tolist()],
            "reexc_delay": self.reexc_delay,
            "jitter_sigma": self.jitter_sigma,
            "mode": config.mode,
            "settings": [config.setting_x, config.setting_xx],
            "n_pulses": int(n_pulses),
            "block_size": int(block_size),
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:32]


@dataclass(eq=False)
class DetectionEventStream:
    """Time-ordered detector click records plus acquisition metadata."""

    channels: np.ndarray  # uint8 channel ids
    timestamps_ps: np.ndarray  # int64, nondecreasing
    mode: str
    n_pulses: int
    params_digest: str
    rep_period_ps: int = 0
    n_on_pulses: int | None = None
    n_emissions: int | None = None
    n_reexcitations: int | None = None

    def __len__(self) -> int:
        return int(self.timestamps_ps.size)

    def channel_times(self, channel: Channel) -> np.ndarray:
        """Sorted timestamps of one channel."""
        return self.timestamps_ps[self.channels == int(channel)]

    def clicks_per_channel(self) -> dict[str, int]:
        counts = np.bincount(self.channels, minlength=len(Channel))
        return {ch.name: int(counts[ch]) for ch in ACTIVE_CHANNELS[self.mode]}

    def summary(self) -> dict:
        return {
            "pulses": self.n_pulses,
            "on_pulses": self.n_on_pulses,
            "emissions": self.n_emissions,
            "reexcitations": self.n_reexcitations,
            "clicks": self.clicks_per_channel(),
            "mode": self.mode,
            "params_digest": self.params_digest,
        }


class TelegraphSampler:
    """Stationary two-state telegraph process with exponential dwell times."""

    def __init__(self, tau_on: float, tau_off: float):
        if tau_on <= 0.0:
            raise ValueError("tau_on must be > 0")
        if tau_off < 0.0:
            raise ValueError("tau_off must be >= 0")
        self.tau_on = float(tau_on)
        self.tau_off = float(tau_off)

    @property
    def on_fraction(self) -> float:
        if self.tau_off == 0.0:
            return 1.0
        return self.tau_on / (self.tau_on + self.tau_off)

    @property
    def corr_time(self) -> float:
        if self.tau_off == 0.0:
            return math.inf
        return self.tau_on * self.tau_off / (self.tau_on + self.tau_off)

    def sample(self, rng: np.random.Generator, duration: float):
        """Draw (initial_state, switch_times) covering [0, duration].

        The initial state follows the stationary distribution; by
        memorylessness the residual dwell is again exponential, so switch
        times are a plain alternating-exponential sequence.
        """
        if self.tau_off == 0.0:
            return True, np.empty(0, dtype=float)
        state0 = bool(rng.random() < self.on_fraction)
        scales = (self.tau_on, self.tau_off) if state0 else (self.tau_off, self.tau_on)
        est = 2.0 * duration / (self.tau_on + self.tau_off)
        chunk = max(16, int(est + 10.0 * math.sqrt(est + 1.0) + 8.0))
        parts = []
        last = 0.0
        idx = 0
        while last <= duration:
            e = rng.standard_exponential(chunk)
            e[0::2] *= scales[idx % 2]
            e[1::2] *= scales[(idx + 1) % 2]
            part = np.cumsum(e) + last
            parts.append(part)
            last = float(part[-1])
            idx += chunk
        return state0, np.concatenate(parts)

    @staticmethod
    def states_at(state0: bool, switch_times: np.ndarray, times: np.ndarray):
        """Boolean on/off state at each query time."""
        seg = np.searchsorted(switch_times, times, side="right")
        return (seg % 2 == 0) == state0


def joint_outcome_probs(rho0, setting_x: str, setting_xx: str) -> np.ndarray:
    """Born probabilities of the four pass/reflect outcomes for a photon pair.

    Order: (pass, pass), (pass, reflect), (reflect, pass), (reflect, reflect)
    with the X photon outcome first.
    """
    rho0 = polarization.require_valid(rho0)
    eye = np.eye(2, dtype=complex)
    proj_x = polarization.projector(setting_x)
    proj_xx = polarization.projector(setting_xx)
    probs = np.empty(4)
    for i, px in enumerate((proj_x, eye - proj_x)):
        for j, pxx in enumerate((proj_xx, eye - proj_xx)):
            probs[2 * i + j] = np.trace(rho0 @ np.kron(px, pxx)).real
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def born_sample_pair(rho0, setting_x: str, setting_xx: str, rng: np.random.Generator):
    """Sample one joint projective outcome; returns (pass_x, pass_xx) booleans."""
    probs = joint_outcome_probs(rho0, setting_x, setting_xx)
    outcome = min(3, int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")))
    return outcome < 2, outcome % 2 == 0


def _block_events(params, config, cum_probs, block_index, m, block_size):
    """Simulate one contiguous block of ``m`` pulses; see module docstring
    for the fixed random-draw order."""
    rng = np.random.default_rng([int(params.seed), int(block_index)])
    rep = params.rep_period
    duration = m * rep
    block_start_ps = block_index * block_size * params.rep_period_ps

    # 1. telegraph blinking and per-pulse on/off state
    telegraph = TelegraphSampler(params.blink_tau_on, params.blink_tau_off)
    state0, switches = telegraph.sample(rng, duration)
    pulse_t = np.arange(m, dtype=float) * rep
    on = TelegraphSampler.states_at(state0, switches, pulse_t)
    idx_on = np.flatnonzero(on)
    n_on = idx_on.size

    # 2. cascade emission, 3. re-excitation
    casc = idx_on[rng.random(n_on) < params.eta_prep]
    n_casc = casc.size
    re_idx = casc[rng.random(n_casc) < params.p_m]
    n_re = re_idx.size

    # 4. decay times (primary cascades first, then the re-excited ones)
    e_xx1 = rng.standard_exponential(n_casc) * params.tau_xx
    e_x1 = rng.standard_exponential(n_casc) * params.tau_x
    e_xx2 = rng.standard_exponential(n_re) * params.tau_xx
    e_x2 = rng.standard_exponential(n_re) * params.tau_x
    t1 = casc * rep
    t2 = re_idx * rep + params.reexc_delay
    t_xx = np.concatenate([t1 + e_xx1, t2 + e_xx2])
    t_x = np.concatenate([t1 + e_xx1 + e_x1, t2 + e_xx2 + e_x2])
    n_ph = n_casc + n_re

    # 5. routing and detection thinning
    clicks = []  # (channel, times) pairs, assembly order fixed

    def _route_splitter(times, ch_a, ch_b):
        arm_b = rng.random(n_ph) >= 0.5
        u_det = rng.random(n_ph)
        eff = np.where(arm_b, params.efficiency(ch_b), params.efficiency(ch_a))
        det = u_det < eff
        clicks.append((np.where(arm_b, int(ch_b), int(ch_a))[det], times[det]))

    def _route_direct(times, channel):
        det = rng.random(n_ph) < params.efficiency(channel)
        clicks.append((np.full(int(det.sum()), int(channel), dtype=np.int64), times[det]))

    if config.mode == "hbt_x":
        _route_splitter(t_x, Channel.X_A, Channel.X_B)
    elif config.mode == "hbt_xx":
        _route_splitter(t_xx, Channel.XX_A, Channel.XX_B)
    elif config.mode == "cross_corr":
        _route_direct(t_x, Channel.X_A)
        _route_direct(t_xx, Channel.XX_A)
    else:  # polarized
        out1 = np.searchsorted(cum_probs, rng.random(n_casc), side="right")
        out2 = np.searchsorted(cum_probs, rng.random(n_re), side="right")
        out = np.minimum(np.concatenate([out1, out2]), 3)
        pass_x = out < 2
        pass_xx = out % 2 == 0
        ch_x = np.where(pass_x, int(Channel.X_PASS), int(Channel.X_REFLECT))
        ch_xx = np.where(pass_xx, int(Channel.XX_PASS), int(Channel.XX_REFLECT))
        for ch_arr, times in ((ch_x, t_x), (ch_xx, t_xx)):
            eff = np.array([params.efficiency(Channel(c)) for c in range(8)])[ch_arr]
            det = rng.random(n_ph) < eff
            clicks.append((ch_arr[det], times[det]))

    # 6. optional detector jitter on photon clicks (assembly order)
    if params.jitter_sigma > 0.0:
        n_clicks = sum(t.size for _, t in clicks)
        jit = rng.normal(0.0, params.jitter_sigma, n_clicks)
        pos = 0
        clicks = [
            (ch, t + jit[pos : (pos := pos + t.size)]) for ch, t in clicks
        ]

    # 7. dark counts, uniform over the block, per active channel
    for ch in config.channels:
        rate = params.dark(ch)
        if rate > 0.0:
            n_dark = rng.poisson(rate * duration)
            clicks.append(
                (np.full(n_dark, int(ch), dtype=np.int64), rng.random(n_dark) * duration)
            )

    ch_all = np.concatenate([c for c, _ in clicks]) if clicks else np.empty(0, np.int64)
    t_all = np.concatenate([t for _, t in clicks]) if clicks else np.empty(0, float)
    ts_ps = np.rint(t_all * PS_PER_SECOND).astype(np.int64) + block_start_ps
    return ch_all.astype(np.uint8), ts_ps, n_on, n_casc, n_re


def simulate_pulse_train(
    params: EmitterParams,
    config: MeasurementConfig,
    n_pulses: int,
    block_size: int = 1 << 21,
    threads: int = 1,
) -> DetectionEventStream:
    """Simulate ``n_pulses`` excitation pulses and return the click stream.

    Deterministic for fixed (params, config, n_pulses, block_size): blocks
    use per-block RNGs seeded from (seed, block_index) and the merged output
    is stable-sorted by timestamp.
    """
    n_pulses = int(n_pulses)
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    params.validate(config)
    # leave headroom for decay tails beyond the last pulse
    if (n_pulses + 1) * params.rep_period_ps >= 2**62:
        raise DataError("n_pulses * rep_period overflows the picosecond range")

    cum_probs = None
    if config.mode == "polarized":
        cum_probs = np.cumsum(
            joint_outcome_probs(params.rho0, config.setting_x, config.setting_xx)
        )

    n_blocks = (n_pulses + block_size - 1) // block_size
    sizes = [
        block_size if (b + 1) * block_size <= n_pulses else n_pulses - b * block_size
        for b in range(n_blocks)
    ]

    def run(b):
        return _block_events(params, config, cum_probs, b, sizes[b], block_size)

    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(b) for b in range(n_blocks)]

    channels = np.concatenate([r[0] for r in results])
    ts = np.concatenate([r[1] for r in results])
    order = np.argsort(ts, kind="stable")
    return DetectionEventStream(
        channels=channels[order],
        timestamps_ps=ts[order],
        mode=config.mode,
        n_pulses=n_pulses,
        params_digest=params.digest(config, n_pulses, block_size),
        rep_period_ps=params.rep_period_ps,
        n_on_pulses=int(sum(r[2] for r in results)),
        n_emissions=int(sum(r[3] for r in results)),
        n_reexcitations=int(sum(r[4] for r in results)),
    )


def expected_zero_peak_per_pulse(params: EmitterParams, config: MeasurementConfig) -> float:
    """Expected same-pulse coincidence pairs per excitation pulse.

    HBT modes pair the two splitter arms (needs a re-excited double
    emission); cross-correlation pairs the X and XX detectors.
    """
    eta = params.eta_blink * params.eta_prep
    if config.mode in ("hbt_x", "hbt_xx"):
        ch_a, ch_b = config.channels
        return (
            eta
            * params.p_m
            * params.efficiency(ch_a)
            * params.efficiency(ch_b)
            / 2.0
        )
    if config.mode == "cross_corr":
        ch_x, ch_xx = config.channels
        return (
            eta
            * (1.0 + 3.0 * params.p_m)
            * params.efficiency(ch_x)
            * params.efficiency(ch_xx)
        )
    raise ConfigError(f"no zero-peak formula for mode {config.mode!r}")


def required_pulses(params: EmitterParams, config: MeasurementConfig, target_counts: int) -> int:
    """Pulses needed so the expected zero-peak count reaches ``target_counts``."""
    per_pulse = expected_zero_peak_per_pulse(params, config)
    if per_pulse <= 0.0:
        raise DataError("expected zero-peak rate is zero for these parameters")
    return int(math.ceil(target_counts / per_pulse))


# --- event stream file format ----------------------------------------------

_MAGIC = b"QDEVT01\x00"
_HEADER = struct.Struct("<8sHBBQQ16s")
_HEADER_SIZE = 64
_RECORD_DTYPE = np.dtype([("channel", "u1"), ("timestamp_ps", "<i8")])


def write_event_stream(path, stream: DetectionEventStream) -> None:
    """Write the 64-byte header plus packed (channel, timestamp) records."""
    header = _HEADER.pack(
        _MAGIC,
        1,
        MODE_IDS[stream.mode],
        0,
        stream.n_pulses,
        len(stream),
        bytes.fromhex(stream.params_digest),
    )
    records = np.empty(len(stream), dtype=_RECORD_DTYPE)
    records["channel"] = stream.channels
    records["timestamp_ps"] = stream.timestamps_ps
    with open(path, "wb") as fh:
        fh.write(header.ljust(_HEADER_SIZE, b"\x00"))
        fh.write(records.tobytes())


def read_event_stream(path) -> DetectionEventStream:
    """Read a stream written by :func:`write_event_stream`."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER_SIZE)
        if len(raw) < _HEADER_SIZE:
            raise DataError(f"{path}: truncated header")
        magic, version, mode_id, _, n_pulses, n_records, digest = _HEADER.unpack(
            raw[: _HEADER.size]
        )
        if magic != _MAGIC:
            raise DataError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise DataError(f"{path}: unsupported version {version}")
        if mode_id >= len(MODES):
            raise DataError(f"{path}: unknown mode id {mode_id}")
        body = fh.read()
    records = np.frombuffer(body, dtype=_RECORD_DTYPE)
    if records.size != n_records:
        raise DataError(
            f"{path}: header promises {n_records} records, file holds {records.size}"
        )
    return DetectionEventStream(
        channels=records["channel"].copy(),
        timestamps_ps=records["timestamp_ps"].copy(),
        mode=MODES[mode_id],
        n_pulses=int(n_pulses),
        params_digest=digest.hex(),
    )


def stream_to_csv(stream: DetectionEventStream) -> str:
    """CSV export with header ``channel,timestamp_ps``."""
    lines = ["channel,timestamp_ps"]
    names = [ch.name for ch in Channel]
    lines.extend(
        f"{names[c]},{t}" for c, t in zip(stream.channels, stream.timestamps_ps)
    )
    return "\n".join(lines) + "\n"
