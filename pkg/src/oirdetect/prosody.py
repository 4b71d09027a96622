"""Prosodic feature extraction: intensity, pauses, voice quality, timing,
word-level prosody, speaker baselines, boundary transitions, latency.

``ProsodicExtractor`` composes everything into one canonical per-segment
feature vector (``PROSODIC_FEATURES`` order).  Per-feature failures impute
and mask; they never abort the vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .audio import AudioBuffer, AudioError, AudioTooShort, frame_signal, frame_times
from .corpus import Dataset, OirSequence, Segment
from .features import FeatureMatrix
from .pitch import (
    HOP_S,
    SEMITONE_REF_HZ,
    PitchTrack,
    TooFewVoicedFrames,
    adapt_pitch_range,
    pitch_stats,
    track_pitch,
)

INTENSITY_WIN_S = 0.030
INTENSITY_HOP_S = 0.010
DB_FULL_SCALE_OFFSET = 94.0   # full-scale sine sits near 91 dB, silence at 0
INTENSITY_FLOOR_DB = 40.0     # stats use frames above max - 40 dB
PAUSE_FLOOR_DB = 25.0         # pauses use the adaptive max - 25 dB threshold
MIN_PAUSE_S = 0.2
PAUSE_MEDIUM_S = 0.5
PAUSE_LONG_S = 1.0
EDGE_SLOPE_SPAN_S = 0.3
NUCLEUS_PROMINENCE_DB = 2.0

PROSODIC_FEATURES = (
    "pitch_min", "pitch_max", "pitch_mean", "pitch_std", "pitch_range",
    "pitch_num_peaks", "pitch_slope", "pitch_slope_mean", "pitch_slope_std",
    "pitch_accel",
    "intensity_min", "intensity_max", "intensity_mean", "intensity_std",
    "intensity_range",
    "jitter", "shimmer", "hnr",
    "n_pauses", "n_short_pauses", "n_medium_pauses", "n_long_pauses",
    "n_initial_pauses", "n_medial_pauses", "n_final_pauses",
    "total_pause_time", "mean_pause_duration", "rel_longest_pause",
    "duration", "speech_rate", "articulation_rate",
    "wat_pitch_mean", "wat_pitch_max", "wat_intensity_mean",
    "wat_intensity_max",
    "repeated_pitch_mean", "repeated_pitch_max", "repeated_intensity_mean",
    "repeated_intensity_max",
    "pitch_z", "pitch_rel_change", "pitch_range_pos",
    "intensity_z", "intensity_rel_change", "intensity_range_pos",
    "pitch_end_slope", "pitch_start_slope",
    "pitch_transition_prev", "pitch_transition_next",
    "intensity_end_slope", "intensity_start_slope",
    "intensity_transition_prev", "intensity_transition_next",
    "latency_ts_ri", "latency_ri_rs",
)

# cross-segment features by temporal direction, for context-mode masking
PAST_CROSS_FEATURES = (
    "pitch_z", "pitch_rel_change", "pitch_range_pos",
    "intensity_z", "intensity_rel_change", "intensity_range_pos",
    "pitch_transition_prev", "intensity_transition_prev",
    "latency_ts_ri",
)
FUTURE_CROSS_FEATURES = (
    "pitch_transition_next", "intensity_transition_next",
    "latency_ri_rs",
)


class ProsodyError(Exception):
    pass


class InsufficientVoicing(ProsodyError):
    pass


class DegenerateDuration(ProsodyError):
    pass


class MissingComponent(ProsodyError):
    pass


class NoHistory(ProsodyError):
    pass


@dataclass(frozen=True)
class IntensityTrack:
    frame_times: np.ndarray
    db: np.ndarray
    win_s: float = INTENSITY_WIN_S


@dataclass(frozen=True)
class Pause:
    start: float
    end: float
    category: str   # short / medium / long
    position: str   # initial / medial / final

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class SpeakerBaseline:
    speaker: str
    pitch_mean: float
    pitch_std: float
    pitch_min: float
    pitch_max: float
    intensity_mean: float
    intensity_std: float
    intensity_min: float
    intensity_max: float
    n_segments: int


# ---------------------------------------------------------------------------
# Intensity

def intensity_track(audio: AudioBuffer) -> IntensityTrack:
    sr = audio.sample_rate
    n_win = int(round(INTENSITY_WIN_S * sr))
    hop = int(round(INTENSITY_HOP_S * sr))
    if len(audio.samples) < n_win:
        raise AudioTooShort("shorter than one intensity window")
    frames = frame_signal(audio.samples, n_win, hop)
    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    db = np.clip(DB_FULL_SCALE_OFFSET + 20 * np.log10(np.maximum(rms, 1e-9)),
                 0.0, None)
    return IntensityTrack(frame_times(len(frames), sr, n_win, hop), db)


def intensity_features(audio: AudioBuffer) -> tuple[IntensityTrack, dict[str, float], dict[str, bool]]:
    """Intensity stats over frames above the silence floor (max - 40 dB)."""
    track = intensity_track(audio)
    names = ["intensity_min", "intensity_max", "intensity_mean",
             "intensity_std", "intensity_range"]
    active = track.db > track.db.max() - INTENSITY_FLOOR_DB
    if not active.any() or track.db.max() <= 0:
        return track, {n: float("nan") for n in names}, {n: False for n in names}
    db = track.db[active]
    values = {
        "intensity_min": float(db.min()),
        "intensity_max": float(db.max()),
        "intensity_mean": float(db.mean()),
        "intensity_std": float(db.std()),
        "intensity_range": float(db.max() - db.min()),
    }
    return track, values, {n: True for n in names}


# ---------------------------------------------------------------------------
# Pauses

def detect_pauses(track: IntensityTrack, segment_duration: float
                  ) -> tuple[list[Pause], dict[str, float], dict[str, bool]]:
    """Silent runs >= 200 ms below the adaptive threshold (max - 25 dB)."""
    threshold = track.db.max() - PAUSE_FLOOR_DB
    silent = track.db < threshold
    half_win = track.win_s / 2
    pauses: list[Pause] = []
    start = None
    for i, s in enumerate(silent):
        if s and start is None:
            start = i
        elif not s and start is not None:
            pauses.extend(_make_pause(track, start, i - 1, half_win,
                                      segment_duration))
            start = None
    if start is not None:
        pauses.extend(_make_pause(track, start, len(silent) - 1, half_win,
                                  segment_duration))

    values = {
        "n_pauses": float(len(pauses)),
        "n_short_pauses": float(sum(p.category == "short" for p in pauses)),
        "n_medium_pauses": float(sum(p.category == "medium" for p in pauses)),
        "n_long_pauses": float(sum(p.category == "long" for p in pauses)),
        "n_initial_pauses": float(sum(p.position == "initial" for p in pauses)),
        "n_medial_pauses": float(sum(p.position == "medial" for p in pauses)),
        "n_final_pauses": float(sum(p.position == "final" for p in pauses)),
        "total_pause_time": float(sum(p.duration for p in pauses)),
        "mean_pause_duration": (float(np.mean([p.duration for p in pauses]))
                                if pauses else 0.0),
    }
    mask = {n: True for n in values}
    if pauses:
        longest = max(pauses, key=lambda p: p.duration)
        mid = (longest.start + longest.end) / 2
        values["rel_longest_pause"] = float(np.clip(mid / segment_duration, 0, 1))
        mask["rel_longest_pause"] = True
    else:
        values["rel_longest_pause"] = float("nan")
        mask["rel_longest_pause"] = False
    return pauses, values, mask


def _make_pause(track: IntensityTrack, i0: int, i1: int, half_win: float,
                segment_duration: float) -> list[Pause]:
    start = track.frame_times[i0] - half_win
    end = track.frame_times[i1] + half_win
    dur = end - start
    if dur < MIN_PAUSE_S:
        return []
    if dur < PAUSE_MEDIUM_S:
        cat = "short"
    elif dur < PAUSE_LONG_S:
        cat = "medium"
    else:
        cat = "long"
    mid = (start + end) / 2
    third = segment_duration / 3
    pos = "initial" if mid < third else ("medial" if mid < 2 * third else "final")
    return [Pause(start=start, end=end, category=cat, position=pos)]


# ---------------------------------------------------------------------------
# Voice quality

def voice_quality(audio: AudioBuffer, track: PitchTrack
                  ) -> tuple[float, float, float]:
    """(jitter %, shimmer %, HNR dB) from cycle marks in voiced stretches."""
    runs = _voiced_run_slices(track.voiced)
    if not any(sl.stop - sl.start >= 3 for sl in runs):
        raise InsufficientVoicing("need >= 3 consecutive voiced frames")
    sr = audio.sample_rate
    periods: list[np.ndarray] = []
    amps: list[np.ndarray] = []
    for sl in runs:
        if sl.stop - sl.start < 3:
            continue
        f0_med = np.median(track.f0[sl])
        t0 = track.frame_times[sl.start] - HOP_S / 2
        t1 = track.frame_times[sl.stop - 1] + HOP_S / 2
        a = max(0, int(t0 * sr))
        b = min(len(audio.samples), int(t1 * sr))
        x = audio.samples[a:b]
        if len(x) < sr / f0_med * 3:
            continue
        dist = max(2, int(0.7 * sr / f0_med))
        peaks, _ = find_peaks(x, distance=dist)
        if len(peaks) < 3:
            continue
        # parabolic refinement of peak time and height
        pk_t, pk_a = [], []
        for p in peaks:
            if 0 < p < len(x) - 1:
                y0, y1, y2 = x[p - 1], x[p], x[p + 1]
                denom = y0 - 2 * y1 + y2
                d = 0.0 if denom == 0 else 0.5 * (y0 - y2) / denom
                d = float(np.clip(d, -0.5, 0.5))
                pk_t.append((p + d) / sr)
                pk_a.append(y1 - 0.25 * (y0 - y2) * d)
        pk_t, pk_a = np.asarray(pk_t), np.asarray(pk_a)
        T = np.diff(pk_t)
        ok = (T > 0.6 / f0_med) & (T < 1.6 / f0_med)
        if ok.sum() >= 2:
            periods.append(T[ok])
            amp_ok = np.concatenate([[True], ok]) & np.concatenate([ok, [True]])
            amps.append(np.abs(pk_a[amp_ok]))
    if not periods:
        raise InsufficientVoicing("no usable cycle marks")
    jitters, shimmers = [], []
    for T in periods:
        if len(T) >= 2:
            jitters.append(np.mean(np.abs(np.diff(T))) / np.mean(T) * 100)
    for A in amps:
        if len(A) >= 2 and np.mean(A) > 0:
            shimmers.append(np.mean(np.abs(np.diff(A))) / np.mean(A) * 100)
    jitter = float(np.mean(jitters)) if jitters else float("nan")
    shimmer = float(np.mean(shimmers)) if shimmers else float("nan")

    r = np.clip(track.acf_peak[track.voiced], 1e-6, 1 - 1e-4)
    hnr = float(np.mean(10 * np.log10(r / (1 - r))))
    return jitter, shimmer, hnr


def _voiced_run_slices(voiced: np.ndarray) -> list[slice]:
    runs, start = [], None
    for i, v in enumerate(voiced):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append(slice(start, i))
            start = None
    if start is not None:
        runs.append(slice(start, len(voiced)))
    return runs


# ---------------------------------------------------------------------------
# Speech timing

def count_syllable_nuclei(itrack: IntensityTrack, ptrack: PitchTrack) -> int:
    """Intensity peaks with >= 2 dB prominence inside voiced regions."""
    peaks, _ = find_peaks(itrack.db, prominence=NUCLEUS_PROMINENCE_DB)
    if len(peaks) == 0:
        return 0
    n = 0
    for p in peaks:
        t = itrack.frame_times[p]
        j = int(np.argmin(np.abs(ptrack.frame_times - t)))
        if ptrack.voiced[j]:
            n += 1
    return n


def speech_timing(seg: Segment, pauses: list[Pause], n_nuclei: int
                  ) -> tuple[dict[str, float], dict[str, bool]]:
    duration = seg.duration
    pause_time = sum(p.duration for p in pauses)
    values = {"duration": float(duration),
              "speech_rate": n_nuclei / duration}
    mask = {"duration": True, "speech_rate": True}
    phonation = duration - pause_time
    if phonation <= 0:
        values["articulation_rate"] = float("nan")
        mask["articulation_rate"] = False
    else:
        values["articulation_rate"] = n_nuclei / phonation
        mask["articulation_rate"] = True
    return values, mask


# ---------------------------------------------------------------------------
# Word-level prosody

def word_level_prosody(seg: Segment, repeated_indices: list[int],
                       ptrack: PitchTrack, itrack: IntensityTrack
                       ) -> tuple[dict[str, float], dict[str, bool]]:
    """Pitch/intensity over tokens repeated from the trouble source and over
    the repair marker lemma 'wat'.  Token times are dialogue-absolute; the
    tracks are segment-relative."""
    values: dict[str, float] = {}
    mask: dict[str, bool] = {}
    groups = {
        "wat": [i for i, t in enumerate(seg.tokens) if t.lemma == "wat"],
        "repeated": list(repeated_indices),
    }
    for label, indices in groups.items():
        spans = []
        for i in indices:
            tok = seg.tokens[i]
            if tok.t_start is not None and tok.t_end is not None:
                spans.append((tok.t_start - seg.t_start,
                              tok.t_end - seg.t_start))
        pitch_vals, inten_vals = [], []
        for a, b in spans:
            sel = (ptrack.frame_times >= a) & (ptrack.frame_times <= b) \
                & ptrack.voiced
            if sel.any():
                pitch_vals.append(12 * np.log2(ptrack.f0[sel] / SEMITONE_REF_HZ))
            isel = (itrack.frame_times >= a) & (itrack.frame_times <= b)
            if isel.any():
                inten_vals.append(itrack.db[isel])
        for chan, chunks in (("pitch", pitch_vals), ("intensity", inten_vals)):
            for stat in ("mean", "max"):
                key = f"{label}_{chan}_{stat}"
                if chunks:
                    allv = np.concatenate(chunks)
                    values[key] = float(allv.mean() if stat == "mean"
                                        else allv.max())
                    mask[key] = True
                else:
                    values[key] = float("nan")
                    mask[key] = False
    return values, mask


# ---------------------------------------------------------------------------
# Baselines and normalization

def speaker_baseline(speaker: str,
                     history: list[tuple[float, float]]) -> SpeakerBaseline:
    """Baseline from (pitch_mean, intensity_mean) of strictly earlier
    segments of this speaker; population std convention."""
    if not history:
        raise NoHistory(f"no prior segments for speaker {speaker}")
    p = np.array([h[0] for h in history], dtype=float)
    i = np.array([h[1] for h in history], dtype=float)
    return SpeakerBaseline(
        speaker=speaker,
        pitch_mean=float(p.mean()), pitch_std=float(p.std()),
        pitch_min=float(p.min()), pitch_max=float(p.max()),
        intensity_mean=float(i.mean()), intensity_std=float(i.std()),
        intensity_min=float(i.min()), intensity_max=float(i.max()),
        n_segments=len(history),
    )


def normalize_to_baseline(value: float, baseline: SpeakerBaseline,
                          channel: str) -> tuple[float, float, float]:
    """(z score, relative change %, position within the speaker range)."""
    if channel == "pitch":
        mean, std = baseline.pitch_mean, baseline.pitch_std
        lo, hi = baseline.pitch_min, baseline.pitch_max
    elif channel == "intensity":
        mean, std = baseline.intensity_mean, baseline.intensity_std
        lo, hi = baseline.intensity_min, baseline.intensity_max
    else:
        raise ValueError(f"unknown channel {channel!r}")
    z = 0.0 if std == 0 else (value - mean) / std
    rel = 0.0 if mean == 0 else 100.0 * (value - mean) / mean
    pos = 0.5 if hi == lo else float(np.clip((value - lo) / (hi - lo), 0, 1))
    return z, rel, pos


# ---------------------------------------------------------------------------
# Boundary slopes, transitions, latency

def edge_slopes(ptrack: PitchTrack) -> tuple[float | None, float | None]:
    """(start_slope, end_slope) in st/s over the initial/final 300 ms of
    voiced contour; None when too little voicing."""
    return (_span_slope(ptrack, ptrack.frame_times[0],
                        ptrack.frame_times[0] + EDGE_SLOPE_SPAN_S),
            _span_slope(ptrack, ptrack.frame_times[-1] - EDGE_SLOPE_SPAN_S,
                        ptrack.frame_times[-1]))


def _span_slope(ptrack: PitchTrack, a: float, b: float) -> float | None:
    sel = (ptrack.frame_times >= a) & (ptrack.frame_times <= b) & ptrack.voiced
    if sel.sum() < 2:
        return None
    t = ptrack.frame_times[sel]
    st = 12 * np.log2(ptrack.f0[sel] / SEMITONE_REF_HZ)
    if t[-1] <= t[0]:
        return None
    return float(np.polyfit(t, st, 1)[0])


def intensity_edge_slopes(itrack: IntensityTrack
                          ) -> tuple[float | None, float | None]:
    active = itrack.db > itrack.db.max() - INTENSITY_FLOOR_DB

    def slope(a, b):
        sel = (itrack.frame_times >= a) & (itrack.frame_times <= b) & active
        if sel.sum() < 2:
            return None
        t = itrack.frame_times[sel]
        if t[-1] <= t[0]:
            return None
        return float(np.polyfit(t, itrack.db[sel], 1)[0])

    return (slope(itrack.frame_times[0],
                  itrack.frame_times[0] + EDGE_SLOPE_SPAN_S),
            slope(itrack.frame_times[-1] - EDGE_SLOPE_SPAN_S,
                  itrack.frame_times[-1]))


def slope_transition(prev_end_slope: float | None,
                     cur_start_slope: float | None) -> float | None:
    """start_slope(cur) - end_slope(prev); None when either side is absent."""
    if prev_end_slope is None or cur_start_slope is None:
        return None
    return cur_start_slope - prev_end_slope


def latency(seq: OirSequence, ds: Dataset) -> tuple[float, float | None]:
    """(TS->RI gap, RI->RS gap) in seconds; negatives mean overlap."""
    if not seq.ts_ids or not seq.ri_ids:
        raise MissingComponent(seq.sequence_id)
    last_ts = max((ds.by_id(i) for i in seq.ts_ids), key=lambda s: s.t_end)
    first_ri = min((ds.by_id(i) for i in seq.ri_ids), key=lambda s: s.t_start)
    ts_ri = first_ri.t_start - last_ts.t_end
    ri_rs = None
    if seq.rs_ids:
        last_ri = max((ds.by_id(i) for i in seq.ri_ids), key=lambda s: s.t_end)
        first_rs = min((ds.by_id(i) for i in seq.rs_ids),
                       key=lambda s: s.t_start)
        ri_rs = first_rs.t_start - last_ri.t_end
    return ts_ri, ri_rs


# ---------------------------------------------------------------------------
# Full extraction

class ProsodicExtractor:
    """Computes the canonical prosodic vector for every segment of a
    Dataset.  ``audio_provider(segment) -> AudioBuffer`` supplies the
    segment's audio span."""

    def __init__(self, audio_provider, adaptive_range: bool = True):
        self.audio_provider = audio_provider
        self.adaptive_range = adaptive_range

    def transform(self, ds: Dataset) -> FeatureMatrix:
        per_segment: dict[str, dict] = {}
        # pass 1: per-segment acoustics, in dialogue order
        for dialogue_id in ds.dialogue_ids():
            for seg in sorted(ds.dialogue_segments(dialogue_id),
                              key=lambda s: (s.t_start, s.segment_id)):
                per_segment[seg.segment_id] = self._segment_acoustics(seg)

        rows: dict[str, tuple[dict, dict]] = {}
        for dialogue_id in ds.dialogue_ids():
            ordered = sorted(ds.dialogue_segments(dialogue_id),
                             key=lambda s: (s.t_start, s.segment_id))
            for idx, seg in enumerate(ordered):
                acoustics = per_segment[seg.segment_id]
                values = dict(acoustics["values"])
                mask = dict(acoustics["mask"])
                self._word_level(seg, ordered, idx, acoustics, values, mask)
                self._baseline(seg, ordered, idx, per_segment, values, mask)
                self._transitions(seg, ordered, idx, per_segment, values, mask)
                self._latency(seg, ds, values, mask)
                for name in PROSODIC_FEATURES:
                    values.setdefault(name, float("nan"))
                    mask.setdefault(name, False)
                rows[seg.segment_id] = (values, mask)
        ordered_rows = {s.segment_id: rows[s.segment_id] for s in ds.segments}
        return FeatureMatrix.from_rows(PROSODIC_FEATURES, ordered_rows)

    # -- per-segment acoustics -------------------------------------------

    def _segment_acoustics(self, seg: Segment) -> dict:
        values: dict[str, float] = {}
        mask: dict[str, bool] = {}
        out = {"values": values, "mask": mask, "ptrack": None, "itrack": None,
               "edge": (None, None), "iedge": (None, None)}
        try:
            audio = self.audio_provider(seg)
        except (AudioError, OSError):
            return out
        try:
            ptrack = track_pitch(audio)
            if self.adaptive_range:
                try:
                    floor, ceiling = adapt_pitch_range(ptrack)
                    ptrack = track_pitch(audio, floor, ceiling)
                except TooFewVoicedFrames:
                    pass
        except AudioTooShort:
            ptrack = None
        if ptrack is not None:
            pv, pm = pitch_stats(ptrack)
            values.update(pv)
            mask.update(pm)
            out["ptrack"] = ptrack
            out["edge"] = edge_slopes(ptrack)
        try:
            itrack, iv, im = intensity_features(audio)
            values.update(iv)
            mask.update(im)
            out["itrack"] = itrack
            out["iedge"] = intensity_edge_slopes(itrack)
        except AudioTooShort:
            itrack = None
        if ptrack is not None:
            try:
                j, s, h = voice_quality(audio, ptrack)
                for k, v in (("jitter", j), ("shimmer", s), ("hnr", h)):
                    values[k] = v
                    mask[k] = np.isfinite(v)
            except InsufficientVoicing:
                pass
        if itrack is not None:
            pauses, pv, pm = detect_pauses(itrack, seg.duration)
            values.update(pv)
            mask.update(pm)
            n_nuclei = (count_syllable_nuclei(itrack, ptrack)
                        if ptrack is not None else 0)
            tv, tm = speech_timing(seg, pauses, n_nuclei)
            values.update(tv)
            mask.update(tm)
            out["pauses"] = pauses
        edge = out["edge"]
        iedge = out["iedge"]
        for key, val in (("pitch_start_slope", edge[0]),
                         ("pitch_end_slope", edge[1]),
                         ("intensity_start_slope", iedge[0]),
                         ("intensity_end_slope", iedge[1])):
            values[key] = float("nan") if val is None else val
            mask[key] = val is not None
        return out

    # -- cross-segment layers --------------------------------------------

    def _word_level(self, seg, ordered, idx, acoustics, values, mask):
        repeated = self._repeated_indices(seg, ordered, idx)
        if acoustics["ptrack"] is not None and acoustics["itrack"] is not None:
            wv, wm = word_level_prosody(seg, repeated, acoustics["ptrack"],
                                        acoustics["itrack"])
            values.update(wv)
            mask.update(wm)

    @staticmethod
    def _repeated_indices(seg: Segment, ordered: list[Segment],
                          idx: int) -> list[int]:
        """Token indices repeated from the other speaker's previous turn."""
        prior: list[Segment] = []
        for s in reversed(ordered[:idx]):
            if s.speaker != seg.speaker:
                prior.append(s)
                # walk back through the full turn of that speaker
                k = ordered.index(s)
                while k > 0 and ordered[k - 1].speaker == s.speaker:
                    k -= 1
                    prior.append(ordered[k])
                break
        prior_lemmas = {t.lemma for s in prior for t in s.lexical_tokens()
                        if t.lemma}
        return [i for i, t in enumerate(seg.tokens)
                if t.lemma and t.lemma in prior_lemmas
                and t.pos != "PUNCT" and not t.nonverbal]

    def _baseline(self, seg, ordered, idx, per_segment, values, mask):
        history = []
        for s in ordered[:idx]:
            if s.speaker != seg.speaker or s.t_end > seg.t_start:
                continue
            acc = per_segment[s.segment_id]
            pv = acc["values"].get("pitch_mean")
            iv = acc["values"].get("intensity_mean")
            if pv is not None and iv is not None \
                    and np.isfinite(pv) and np.isfinite(iv):
                history.append((pv, iv))
        names = ("pitch_z", "pitch_rel_change", "pitch_range_pos",
                 "intensity_z", "intensity_rel_change", "intensity_range_pos")
        if not history:
            for n in names:
                values[n] = float("nan")
                mask[n] = False
            return
        baseline = speaker_baseline(seg.speaker, history)
        for chan in ("pitch", "intensity"):
            cur = values.get(f"{chan}_mean")
            if cur is None or not np.isfinite(cur):
                for suffix in ("z", "rel_change", "range_pos"):
                    values[f"{chan}_{suffix}"] = float("nan")
                    mask[f"{chan}_{suffix}"] = False
                continue
            z, rel, pos = normalize_to_baseline(cur, baseline, chan)
            values[f"{chan}_z"] = z
            values[f"{chan}_rel_change"] = rel
            values[f"{chan}_range_pos"] = pos
            for suffix in ("z", "rel_change", "range_pos"):
                mask[f"{chan}_{suffix}"] = True

    def _transitions(self, seg, ordered, idx, per_segment, values, mask):
        cur = per_segment[seg.segment_id]
        for direction, other_idx in (("prev", idx - 1), ("next", idx + 1)):
            if 0 <= other_idx < len(ordered):
                other = per_segment[ordered[other_idx].segment_id]
            else:
                other = None
            for chan, edge_key in (("pitch", "edge"), ("intensity", "iedge")):
                if other is None:
                    tr = None
                elif direction == "prev":
                    tr = slope_transition(other[edge_key][1],
                                          cur[edge_key][0])
                else:
                    tr = slope_transition(cur[edge_key][1],
                                          other[edge_key][0])
                key = f"{chan}_transition_{direction}"
                values[key] = float("nan") if tr is None else tr
                mask[key] = tr is not None

    @staticmethod
    def _latency(seg, ds: Dataset, values, mask):
        values["latency_ts_ri"] = float("nan")
        values["latency_ri_rs"] = float("nan")
        mask["latency_ts_ri"] = False
        mask["latency_ri_rs"] = False
        if seg.role != "RI" or not seg.sequence_id:
            return
        try:
            seq = ds.sequence_by_id(seg.sequence_id)
            ts_ri, ri_rs = latency(seq, ds)
        except (KeyError, MissingComponent):
            return
        values["latency_ts_ri"] = ts_ri
        mask["latency_ts_ri"] = True
        if ri_rs is not None:
            values["latency_ri_rs"] = ri_rs
            mask["latency_ri_rs"] = True


def wav_audio_provider(base_dir) -> "callable":
    """Provider that resolves audio_ref paths relative to base_dir and
    slices the segment's span; caches whole-file reads."""
    from pathlib import Path

    from .audio import read_wav

    base = Path(base_dir)
    cache: dict[tuple[str, int], AudioBuffer] = {}

    def provider(seg: Segment) -> AudioBuffer:
        key = (seg.audio_path, seg.audio_channel)
        if key not in cache:
            path = Path(seg.audio_path)
            if not path.is_absolute():
                path = base / path
            cache[key] = read_wav(path, seg.audio_channel)
        return cache[key].slice(seg.t_start, seg.t_end)

    return provider
