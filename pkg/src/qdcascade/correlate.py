"""Correlation histograms and the estimators extracted from them.

``build_histogram`` counts delays t_b - t_a between two sorted click streams
with a sliding window (O(N*k), never O(N^2)).  Bins are half-open intervals
[k*w, (k+1)*w) so that halving the bin width refines bins in place; that
makes peak integration exactly invariant under bin refinement as long as the
peak-window edges are bin-aligned.

From the integrated peak table:

* ``g2_poisson``: zero peak over far peaks (outside the blinking bunching
  envelope), the normalization an equally bright Poissonian source defines;
* ``g2_sidepeak``: zero peak over the two adjacent peaks, the common
  literature normalization that is biased low by the blinking factor;
* ``estimate_eta_blink``: fits the bunching envelope
  B (1 + (1-eta)/eta * exp(-|n| T / tau_c)) of the side peaks;
* ``estimate_eta_prep``: side peaks over zero peak of a cross-correlation
  run, which isolates the preparation fidelity.

Standard errors follow Gaussian propagation of Poisson counting noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from . import kernels
from .errors import ConfigError, DataError, EstimationError


@dataclass(eq=False)
class CorrelationHistogram:
    """Delay histogram between two streams.

    ``counts[i]`` covers delays [(i - n_half) * bin_width,
    (i - n_half + 1) * bin_width) picoseconds.
    """

    bin_width_ps: int
    n_half: int
    counts: np.ndarray
    total_a: int
    total_b: int
    n_pulses: int | None = None
    rep_period_ps: int | None = None

    @property
    def delays_ps(self) -> np.ndarray:
        """Bin centers in picoseconds."""
        k = np.arange(-self.n_half, self.n_half, dtype=np.int64)
        return k * self.bin_width_ps + self.bin_width_ps // 2

    @property
    def span_ps(self) -> int:
        return self.n_half * self.bin_width_ps

    def to_csv(self) -> str:
        lines = ["delay_ps,count"]
        lines.extend(f"{d},{c}" for d, c in zip(self.delays_ps, self.counts))
        return "\n".join(lines) + "\n"


def _require_sorted(ts: np.ndarray, name: str) -> np.ndarray:
    ts = np.ascontiguousarray(ts, dtype=np.int64)
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise DataError(f"{name} timestamps are not sorted")
    return ts


def build_histogram(
    ts_a,
    ts_b,
    bin_width_ps: int,
    max_delay_ps: int,
    n_pulses: int | None = None,
    rep_period_ps: int | None = None,
) -> CorrelationHistogram:
    """Histogram all ordered pairs (a, b) with |t_b - t_a| <= max_delay.

    ``bin_width_ps`` must be even so bin centers are integers.  The covered
    delay range is rounded up to a whole number of bins.
    """
    bin_width_ps = int(bin_width_ps)
    max_delay_ps = int(max_delay_ps)
    if bin_width_ps <= 0 or bin_width_ps % 2 != 0:
        raise ConfigError(f"bin_width_ps must be a positive even integer, got {bin_width_ps}")
    if max_delay_ps < bin_width_ps:
        raise ConfigError("max_delay_ps must be at least one bin wide")
    ts_a = _require_sorted(ts_a, "stream A")
    ts_b = _require_sorted(ts_b, "stream B")
    n_half = -(-max_delay_ps // bin_width_ps)  # ceil
    counts = kernels.pair_delay_histogram(ts_a, ts_b, bin_width_ps, n_half)
    return CorrelationHistogram(
        bin_width_ps=bin_width_ps,
        n_half=n_half,
        counts=counts,
        total_a=int(ts_a.size),
        total_b=int(ts_b.size),
        n_pulses=n_pulses,
        rep_period_ps=rep_period_ps,
    )


@dataclass(eq=False)
class PeakTable:
    """Integrated coincidence counts around multiples of the pulse period."""

    ns: np.ndarray  # pulse-separation indices, ascending
    counts: np.ndarray  # int64 sums per peak
    rep_period_ps: int
    peak_window_ps: int
    n_pulses: int | None = None

    def __getitem__(self, n: int) -> int:
        idx = np.searchsorted(self.ns, n)
        if idx >= self.ns.size or self.ns[idx] != n:
            raise KeyError(f"peak {n} not present")
        return int(self.counts[idx])

    def __contains__(self, n: int) -> bool:
        idx = np.searchsorted(self.ns, n)
        return idx < self.ns.size and self.ns[idx] == n

    @property
    def max_n(self) -> int:
        return int(self.ns.max())

    def select(self, n_lo: int, n_hi: int) -> np.ndarray:
        """Counts of peaks with n_lo <= |n| <= n_hi."""
        mask = (np.abs(self.ns) >= n_lo) & (np.abs(self.ns) <= n_hi)
        return self.counts[mask]


def integrate_peaks(
    hist: CorrelationHistogram,
    rep_period_ps: int | None = None,
    peak_window_ps: int = 3000,
) -> PeakTable:
    """Sum histogram counts in +-peak_window around each multiple of the
    pulse period covered by the histogram.

    A peak is included only when its window lies fully inside the histogram
    range.  Windows must not overlap (2 * peak_window < rep_period).
    """
    if rep_period_ps is None:
        rep_period_ps = hist.rep_period_ps
    if not rep_period_ps:
        raise ConfigError("rep_period_ps is required (histogram carries none)")
    rep_period_ps = int(rep_period_ps)
    peak_window_ps = int(peak_window_ps)
    if peak_window_ps <= 0:
        raise ConfigError("peak_window_ps must be > 0")
    if 2 * peak_window_ps >= rep_period_ps:
        raise ConfigError(
            f"peak windows overlap: 2 * {peak_window_ps} >= {rep_period_ps}"
        )
    w = hist.bin_width_ps
    span = hist.span_ps
    n_max = (span - peak_window_ps) // rep_period_ps
    if n_max < 0:
        raise ConfigError("histogram narrower than one peak window")
    ns = np.arange(-n_max, n_max + 1, dtype=np.int64)
    centers = ns * rep_period_ps
    # bins fully inside [center - pw, center + pw): ceil/floor to bin edges
    k_lo = -(-(centers - peak_window_ps) // w)
    k_hi = (centers + peak_window_ps) // w  # exclusive
    cum = np.concatenate([[0], np.cumsum(hist.counts)])
    lo_idx = np.clip(k_lo + hist.n_half, 0, hist.counts.size)
    hi_idx = np.clip(k_hi + hist.n_half, 0, hist.counts.size)
    sums = cum[hi_idx] - cum[lo_idx]
    return PeakTable(
        ns=ns,
        counts=sums.astype(np.int64),
        rep_period_ps=rep_period_ps,
        peak_window_ps=peak_window_ps,
        n_pulses=hist.n_pulses,
    )


@dataclass(frozen=True)
class EstimateResult:
    """A scalar estimate with its propagated Poisson standard error."""

    estimate: float
    std_error: float
    method: str
    windows: dict = field(default_factory=dict)
    warnings: tuple = ()

    def to_json(self) -> str:
        payload = {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "method": self.method,
            "windows": self.windows,
        }
        if self.warnings:
            payload["warnings"] = list(self.warnings)
        return json.dumps(payload, sort_keys=True)


def _side_mean(peaks: PeakTable) -> tuple[float, float]:
    """Mean of the +-1 peaks and its Poisson variance."""
    for n in (-1, 1):
        if n not in peaks:
            raise EstimationError("peak table lacks the +-1 side peaks")
    total = peaks[1] + peaks[-1]
    return total / 2.0, total / 4.0


def g2_sidepeak(peaks: PeakTable) -> EstimateResult:
    """Zero peak normalized to the mean of the two adjacent peaks."""
    if 0 not in peaks:
        raise EstimationError("peak table lacks the zero peak")
    n0 = peaks[0]
    side, side_var = _side_mean(peaks)
    if side <= 0.0:
        raise EstimationError("side peaks are empty; estimate undefined")
    g = n0 / side
    var = (n0 / side**2) + (n0**2 * side_var / side**4)
    return EstimateResult(
        estimate=float(g),
        std_error=float(math.sqrt(var)),
        method="sidepeak",
        windows={"peak_window_ps": peaks.peak_window_ps},
    )


def g2_poisson(
    peaks: PeakTable,
    far_range: tuple[int, int] = (800, 1600),
    blink_corr_time_s: float | None = None,
) -> EstimateResult:
    """Zero peak normalized to the mean of far peaks at |n| in far_range.

    Far peaks sit at the uncorrelated (Poissonian) level provided
    |n| * rep_period well exceeds the blink correlation time; a warning is
    attached when metadata shows otherwise.
    """
    if 0 not in peaks:
        raise EstimationError("peak table lacks the zero peak")
    n_lo, n_hi = int(far_range[0]), int(far_range[1])
    if not 0 < n_lo <= n_hi:
        raise ConfigError(f"invalid far_range {far_range}")
    far = peaks.select(n_lo, n_hi)
    if far.size == 0:
        raise EstimationError("no peaks inside far_range; enlarge max_delay")
    warnings = ()
    if blink_corr_time_s is not None:
        lag = n_lo * peaks.rep_period_ps * 1e-12
        if lag < 5.0 * blink_corr_time_s:
            warnings = (
                f"far_range starts at {lag:.3g} s, inside the bunching envelope "
                f"(tau_c = {blink_corr_time_s:.3g} s); estimate biased low",
            )
    n0 = peaks[0]
    far_sum = int(far.sum())
    far_mean = far_sum / far.size
    if far_mean <= 0.0:
        raise EstimationError("far peaks are empty; estimate undefined")
    g = n0 / far_mean
    var = n0 / far_mean**2 + n0**2 * (far_sum / far.size**2) / far_mean**4
    return EstimateResult(
        estimate=float(g),
        std_error=float(math.sqrt(var)),
        method="poisson_far_peaks",
        windows={
            "peak_window_ps": peaks.peak_window_ps,
            "far_range": [n_lo, n_hi],
            "n_far_peaks": int(far.size),
        },
        warnings=warnings,
    )


def estimate_eta_prep(peaks: PeakTable) -> EstimateResult:
    """Preparation fidelity from a cross-correlation peak table.

    The zero peak scales with eta_prep, the side peaks with eta_prep^2
    (both pulses must prepare the emitter), so side/zero estimates eta_prep
    up to an O(p_m) correction.
    """
    if 0 not in peaks:
        raise EstimationError("peak table lacks the zero peak")
    n0 = peaks[0]
    if n0 <= 0:
        raise EstimationError("zero peak is empty; estimate undefined")
    side, side_var = _side_mean(peaks)
    eta = side / n0
    var = side_var / n0**2 + side**2 / n0**3
    return EstimateResult(
        estimate=float(eta),
        std_error=float(math.sqrt(var)),
        method="cross_corr_zero_peak",
        windows={"peak_window_ps": peaks.peak_window_ps},
    )


@dataclass(frozen=True)
class BlinkEstimate:
    """Result of the bunching-envelope fit."""

    eta_blink: float
    eta_blink_std: float
    tau_corr_s: float
    tau_corr_std: float
    baseline: float
    n_peaks_fit: int
    rms_residual: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "eta_blink": self.eta_blink,
                "eta_blink_std": self.eta_blink_std,
                "tau_corr_s": self.tau_corr_s,
                "tau_corr_std": self.tau_corr_std,
                "baseline": self.baseline,
                "n_peaks_fit": self.n_peaks_fit,
                "rms_residual": self.rms_residual,
            },
            sort_keys=True,
        )


def estimate_eta_blink(peaks: PeakTable, max_n: int | None = None) -> BlinkEstimate:
    """Fit side peaks (n != 0) to B (1 + (1-eta)/eta exp(-|n| T / tau_c)).

    Least squares weighted by Poisson errors.  Requires the peak table to
    span the envelope decay; a flat table fits eta = 1.
    """
    rep_s = peaks.rep_period_ps * 1e-12
    mask = peaks.ns != 0
    if max_n is not None:
        mask &= np.abs(peaks.ns) <= max_n
    lags = np.abs(peaks.ns[mask]) * rep_s
    counts = peaks.counts[mask].astype(float)
    if counts.size < 8:
        raise EstimationError("too few side peaks for an envelope fit")

    near = counts[np.abs(peaks.ns[mask]) <= max(3, int(0.01 * lags.size))].mean()
    n_far_tail = max(8, counts.size // 10)
    far = np.sort(counts)[: 2 * n_far_tail].mean()  # low counts sit at the far level
    eta0 = min(0.999, max(1e-3, far / near if near > 0 else 0.5))
    # initial correlation time from where the excess decays to half
    excess = counts - far
    half_idx = np.argmax(excess < 0.5 * max(excess.max(), 1.0))
    tau0 = max(lags[half_idx] / math.log(2.0), rep_s)

    def envelope(lag, baseline, eta, tau):
        return baseline * (1.0 + (1.0 - eta) / eta * np.exp(-lag / tau))

    sigma = np.sqrt(np.maximum(counts, 1.0))
    try:
        popt, pcov = curve_fit(
            envelope,
            lags,
            counts,
            p0=(max(far, 1.0), eta0, tau0),
            sigma=sigma,
            absolute_sigma=True,
            bounds=([0.0, 1e-6, rep_s * 0.1], [np.inf, 1.0, np.inf]),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise EstimationError(f"bunching-envelope fit failed: {exc}") from exc
    baseline, eta, tau = popt
    perr = np.sqrt(np.clip(np.diag(pcov), 0.0, None))
    resid = (envelope(lags, *popt) - counts) / sigma
    return BlinkEstimate(
        eta_blink=float(eta),
        eta_blink_std=float(perr[1]),
        tau_corr_s=float(tau),
        tau_corr_std=float(perr[2]),
        baseline=float(baseline),
        n_peaks_fit=int(counts.size),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
    )
