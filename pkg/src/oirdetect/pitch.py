"""Autocorrelation pitch tracking with voicing decisions and contour stats.

The tracker uses 40 ms Hann windows every 10 ms, window-compensated
normalized autocorrelation, parabolic peak interpolation, 5-point median
smoothing, and robust outlier rejection on the semitone contour.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .audio import AudioBuffer, AudioTooShort, frame_signal, frame_times

WIN_S = 0.040
HOP_S = 0.010
VOICING_THRESHOLD = 0.45
SILENCE_DB_BELOW_MAX = 40.0
OUTLIER_ROBUST_STD = 2.5
OCTAVE_COST = 0.01
MEDIAN_WIDTH = 5
SEMITONE_REF_HZ = 100.0


class PitchError(Exception):
    pass


class TooFewVoicedFrames(PitchError):
    pass


class NonPositiveFrequency(PitchError):
    pass


@dataclass(frozen=True)
class PitchTrack:
    frame_times: np.ndarray
    f0: np.ndarray          # Hz; 0.0 where unvoiced
    voiced: np.ndarray      # bool
    acf_peak: np.ndarray    # normalized ACF maximum per frame (voiced quality)
    floor: float
    ceiling: float

    def voiced_f0(self) -> np.ndarray:
        return self.f0[self.voiced]

    def n_voiced(self) -> int:
        return int(self.voiced.sum())


def hz_to_semitones(f: float | np.ndarray, ref: float = SEMITONE_REF_HZ):
    """12 * log2(f / ref)."""
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr <= 0) or ref <= 0:
        raise NonPositiveFrequency(f"f={f}, ref={ref}")
    out = 12.0 * np.log2(f_arr / ref)
    return float(out) if np.isscalar(f) or f_arr.ndim == 0 else out


def _nan_median_smooth(values: np.ndarray, width: int) -> np.ndarray:
    """Sliding median ignoring NaNs; NaN positions stay NaN."""
    half = width // 2
    out = np.copy(values)
    n = len(values)
    for i in range(n):
        if np.isnan(values[i]):
            continue
        window = values[max(0, i - half):min(n, i + half + 1)]
        out[i] = np.nanmedian(window)
    return out


def track_pitch(audio: AudioBuffer, floor: float = 60.0,
                ceiling: float = 500.0) -> PitchTrack:
    """Extract the F0 contour of a mono buffer.

    Frames whose normalized ACF peak falls below the voicing threshold or
    whose RMS sits under the silence floor are unvoiced.  Voiced frames are
    median-smoothed and contour outliers (>2.5 robust std from the segment
    median, in semitones) are re-marked unvoiced.
    """
    if not (60.0 <= floor < ceiling <= 500.0):
        raise ValueError(f"pitch range [{floor}, {ceiling}] outside [60, 500]")
    sr = audio.sample_rate
    n_win = int(round(WIN_S * sr))
    hop = int(round(HOP_S * sr))
    if len(audio.samples) < 2 * n_win:
        raise AudioTooShort(
            f"{len(audio.samples)} samples: need at least two analysis windows")
    frames = frame_signal(audio.samples, n_win, hop)
    times = frame_times(len(frames), sr, n_win, hop)

    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    max_rms = rms.max()
    silence_rms = max(max_rms * 10 ** (-SILENCE_DB_BELOW_MAX / 20), 1e-6)

    window = np.hanning(n_win)
    centered = (frames - frames.mean(axis=1, keepdims=True)) * window
    n_fft = 1 << int(np.ceil(np.log2(2 * n_win)))
    spec = np.fft.rfft(centered, n_fft)
    acf = np.fft.irfft(np.abs(spec) ** 2, n_fft)[:, :n_win]
    # compensate the window taper the way Praat does: divide by the
    # autocorrelation of the window itself
    wspec = np.fft.rfft(window, n_fft)
    wacf = np.fft.irfft(np.abs(wspec) ** 2, n_fft)[:n_win]
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = acf / acf[:, :1]
        norm = norm / (wacf / wacf[0])[None, :]
    norm[~np.isfinite(norm)] = 0.0

    lag_min = max(2, int(np.floor(sr / ceiling)))
    lag_max = min(n_win - 2, int(np.ceil(sr / floor)))
    band = norm[:, lag_min:lag_max + 1]
    # candidate lags are local ACF maxima; an octave cost breaks the tie
    # between a period and its multiples in favor of the shorter lag
    lags = np.arange(lag_min, lag_max + 1)
    is_peak = np.zeros_like(band, dtype=bool)
    is_peak[:, 1:-1] = (band[:, 1:-1] >= band[:, :-2]) & \
                       (band[:, 1:-1] >= band[:, 2:])
    score = band - OCTAVE_COST * np.log2(lags / lag_min)[None, :]
    score[~is_peak] = -np.inf
    has_peak = is_peak.any(axis=1)
    peak_idx = np.where(has_peak, np.argmax(score, axis=1),
                        np.argmax(band, axis=1)) + lag_min

    n_frames = len(frames)
    f0 = np.zeros(n_frames)
    peak_val = np.zeros(n_frames)
    for i in range(n_frames):
        lag = peak_idx[i]
        y0, y1, y2 = norm[i, lag - 1], norm[i, lag], norm[i, lag + 1]
        denom = y0 - 2 * y1 + y2
        delta = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
        delta = float(np.clip(delta, -0.5, 0.5))
        peak_val[i] = min(1.0, y1 - 0.25 * (y0 - y2) * delta)
        f0[i] = sr / (lag + delta)

    voiced = (peak_val >= VOICING_THRESHOLD) & (rms >= silence_rms) \
        & (f0 >= floor) & (f0 <= ceiling)
    f0[~voiced] = np.nan

    # 5-point median smoothing over the voiced contour
    f0 = _nan_median_smooth(f0, MEDIAN_WIDTH)

    # robust outlier rejection in the semitone domain
    if voiced.any():
        st = 12.0 * np.log2(f0[voiced] / SEMITONE_REF_HZ)
        med = np.median(st)
        mad = np.median(np.abs(st - med))
        robust_std = max(1.4826 * mad, 0.05)
        all_st = np.full(n_frames, np.nan)
        all_st[voiced] = st
        outlier = voiced & (np.abs(all_st - med) > OUTLIER_ROBUST_STD * robust_std)
        voiced = voiced & ~outlier
        f0[~voiced] = np.nan

    out_f0 = np.where(voiced, f0, 0.0)
    return PitchTrack(frame_times=times, f0=out_f0, voiced=voiced,
                      acf_peak=peak_val, floor=floor, ceiling=ceiling)


def adapt_pitch_range(track: PitchTrack) -> tuple[float, float]:
    """Speaker-adaptive floor/ceiling from a wide first pass:
    (0.75 * q25, 1.5 * q75) clamped to [60, 500]."""
    if track.n_voiced() < 10:
        raise TooFewVoicedFrames(f"{track.n_voiced()} voiced frames < 10")
    q25, q75 = np.percentile(track.voiced_f0(), [25, 75])
    return max(60.0, 0.75 * q25), min(500.0, 1.5 * q75)


def pitch_stats(track: PitchTrack) -> tuple[dict[str, float], dict[str, bool]]:
    """Segment-level pitch features over voiced frames.

    Returns (values, presence); everything is absent when no frame is
    voiced and the caller imputes.
    """
    names = ["pitch_min", "pitch_max", "pitch_mean", "pitch_std",
             "pitch_range", "pitch_num_peaks", "pitch_slope",
             "pitch_slope_mean", "pitch_slope_std", "pitch_accel"]
    if track.n_voiced() == 0:
        return {n: float("nan") for n in names}, {n: False for n in names}

    f0 = track.f0
    voiced = track.voiced
    vf = f0[voiced]
    t = track.frame_times
    values: dict[str, float] = {
        "pitch_min": float(vf.min()),
        "pitch_max": float(vf.max()),
        "pitch_mean": float(vf.mean()),
        "pitch_std": float(vf.std()),
        "pitch_range": float(vf.max() - vf.min()),
    }

    st = np.full(len(f0), np.nan)
    st[voiced] = 12.0 * np.log2(vf / SEMITONE_REF_HZ)
    smooth = _nan_median_smooth(st, MEDIAN_WIDTH)

    # peaks with >= 1.5 st prominence, per voiced run
    n_peaks = 0
    for run in _voiced_runs(voiced):
        seg = smooth[run]
        if len(seg) >= 3:
            peaks, _ = find_peaks(seg, prominence=1.5)
            n_peaks += len(peaks)
    values["pitch_num_peaks"] = float(n_peaks)

    tv = t[voiced]
    stv = st[voiced]
    if len(tv) >= 2 and tv[-1] > tv[0]:
        slope = float(np.polyfit(tv, stv, 1)[0])
    else:
        slope = 0.0
    values["pitch_slope"] = slope

    # frame-to-frame first derivative over consecutive voiced frames
    idx = np.flatnonzero(voiced)
    consec = np.diff(idx) == 1
    if consec.any():
        d1 = np.diff(stv) / np.diff(tv)
        d1 = d1[consec]
        values["pitch_slope_mean"] = float(d1.mean())
        values["pitch_slope_std"] = float(d1.std())
    else:
        values["pitch_slope_mean"] = 0.0
        values["pitch_slope_std"] = 0.0

    # second difference (acceleration) over voiced triples
    accels = []
    hop = float(np.median(np.diff(t))) if len(t) > 1 else HOP_S
    for run in _voiced_runs(voiced):
        seg = st[run]
        if len(seg) >= 3:
            accels.append(np.abs(np.diff(seg, 2)) / hop ** 2)
    values["pitch_accel"] = float(np.concatenate(accels).mean()) if accels else 0.0

    return values, {n: True for n in names}


def _voiced_runs(voiced: np.ndarray) -> list[slice]:
    runs = []
    start = None
    for i, v in enumerate(voiced):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append(slice(start, i))
            start = None
    if start is not None:
        runs.append(slice(start, len(voiced)))
    return runs
