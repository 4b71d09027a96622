import numpy as np
import pytest

from oirdetect.audio import AudioBuffer
from oirdetect.pitch import track_pitch
from oirdetect.prosody import (NoHistory, ProsodicExtractor,
                               count_syllable_nuclei, detect_pauses,
                               edge_slopes, intensity_features,
                               intensity_track, latency,
                               normalize_to_baseline, slope_transition,
                               speaker_baseline, speech_timing,
                               voice_quality, wav_audio_provider)

from conftest import SR, dataset, glide, seg, tok, tone


def test_intensity_constant_tone():
    _, vals, mask = intensity_features(tone(220, 1.0))
    assert mask["intensity_std"]
    assert vals["intensity_std"] < 0.5
    assert vals["intensity_range"] < 1.0


def test_intensity_doubling_adds_6db():
    _, a, _ = intensity_features(tone(220, 1.0, amp=0.2))
    _, b, _ = intensity_features(tone(220, 1.0, amp=0.4))
    assert abs((b["intensity_mean"] - a["intensity_mean"]) - 6.02) < 0.1


def test_intensity_level_difference_20db():
    _, a, _ = intensity_features(tone(220, 1.0, amp=0.5))
    _, b, _ = intensity_features(tone(220, 1.0, amp=0.05))
    assert abs((a["intensity_max"] - b["intensity_max"]) - 20.0) < 0.2


def _gap_signal(gap_s):
    a = tone(220, 1.0).samples
    b = tone(220, 1.0).samples
    return AudioBuffer(np.concatenate([a, np.zeros(int(gap_s * SR)), b]), SR)


def test_single_short_pause():
    audio = _gap_signal(0.3)
    pauses, vals, mask = detect_pauses(intensity_track(audio),
                                       len(audio.samples) / SR)
    assert len(pauses) == 1
    p = pauses[0]
    assert abs(p.duration - 0.30) < 0.02
    assert p.category == "short"
    assert p.position == "medial"
    assert abs(vals["rel_longest_pause"] - 0.5) < 0.02


def test_continuous_tone_no_pause():
    audio = tone(220, 2.0)
    pauses, vals, _ = detect_pauses(intensity_track(audio), 2.0)
    assert pauses == []
    assert vals["n_pauses"] == 0.0


def test_below_threshold_gap_no_pause():
    audio = _gap_signal(0.15)
    pauses, _, _ = detect_pauses(intensity_track(audio),
                                 len(audio.samples) / SR)
    assert pauses == []


def test_voice_quality_pure_tone():
    audio = tone(220, 1.0)
    jitter, shimmer, hnr = voice_quality(audio, track_pitch(audio))
    assert jitter < 0.5
    assert hnr > 25.0


def test_hnr_at_5db_snr():
    rng = np.random.default_rng(4)
    sig = tone(220, 1.0).samples
    noise = rng.standard_normal(len(sig))
    noise *= np.sqrt(np.mean(sig ** 2) / np.mean(noise ** 2)) \
        / 10 ** (5 / 20)
    audio = AudioBuffer(sig + noise, SR)
    _, _, hnr = voice_quality(audio, track_pitch(audio))
    assert abs(hnr - 5.0) < 2.0


def test_am_shimmer_exceeds_plain():
    t = np.arange(SR) / SR
    carrier = 0.3 * np.sin(2 * np.pi * 220 * t)
    plain = AudioBuffer(carrier, SR)
    am = AudioBuffer(carrier * (1 + 0.1 * np.sin(2 * np.pi * 30 * t)), SR)
    _, s_plain, _ = voice_quality(plain, track_pitch(plain))
    _, s_am, _ = voice_quality(am, track_pitch(am))
    assert s_am > s_plain


def _nucleus_signal(n_nuclei, dur):
    t = np.arange(int(dur * SR)) / SR
    # n_nuclei raised-cosine humps
    env = 0.05 + 0.95 * np.sin(np.pi * ((t * n_nuclei / dur) % 1.0)) ** 2
    return AudioBuffer(0.3 * env * np.sin(2 * np.pi * 180 * t), SR)


def test_speech_rate_five_nuclei():
    audio = _nucleus_signal(5, 2.0)
    n = count_syllable_nuclei(intensity_track(audio), track_pitch(audio))
    s = seg("x", [tok("a")], t_start=0, t_end=2.0)
    vals, mask = speech_timing(s, [], n)
    assert abs(vals["speech_rate"] - 2.5) < 0.5
    assert vals["articulation_rate"] == vals["speech_rate"]


def test_articulation_rate_excludes_pauses():
    from oirdetect.prosody import Pause
    s = seg("x", [tok("a")], t_start=0, t_end=2.0)
    vals, _ = speech_timing(s, [Pause(0.5, 1.5, "long", "medial")], 4)
    assert vals["speech_rate"] == 2.0
    assert vals["articulation_rate"] == 4.0


def test_baseline_single_prior():
    b = speaker_baseline("A", [(150.0, 60.0)])
    assert b.pitch_mean == 150.0
    assert b.pitch_std == 0.0


def test_baseline_population_std():
    b = speaker_baseline("A", [(100.0, 60.0), (200.0, 70.0)])
    assert b.pitch_mean == 150.0
    assert b.pitch_std == 50.0


def test_baseline_empty_history():
    with pytest.raises(NoHistory):
        speaker_baseline("A", [])


def test_normalize_worked_example():
    from oirdetect.prosody import SpeakerBaseline
    b = SpeakerBaseline("A", pitch_mean=180, pitch_std=20, pitch_min=140,
                        pitch_max=240, intensity_mean=0, intensity_std=0,
                        intensity_min=0, intensity_max=0, n_segments=5)
    z, rel, pos = normalize_to_baseline(220, b, "pitch")
    assert abs(z - 2.0) < 1e-9
    assert abs(rel - 100 * 40 / 180) < 1e-9
    assert abs(pos - 0.8) < 1e-9


def test_normalize_identity_and_zero_std():
    from oirdetect.prosody import SpeakerBaseline
    b = SpeakerBaseline("A", pitch_mean=180, pitch_std=0, pitch_min=180,
                        pitch_max=180, intensity_mean=0, intensity_std=0,
                        intensity_min=0, intensity_max=0, n_segments=1)
    z, rel, pos = normalize_to_baseline(180, b, "pitch")
    assert (z, rel, pos) == (0.0, 0.0, 0.5)


def test_slope_transition():
    assert slope_transition(3.0, -2.0) == -5.0
    assert slope_transition(0.0, 0.0) == 0.0
    assert slope_transition(None, 2.0) is None


def test_edge_slope_transition_constructed():
    falling = track_pitch(glide(220, 220 * 2 ** (-6 / 12), 1.0))
    rising = track_pitch(glide(180, 180 * 2 ** (8 / 12), 1.0))
    _, end_fall = edge_slopes(falling)
    start_rise, _ = edge_slopes(rising)
    assert abs(slope_transition(end_fall, start_rise) - 14.0) < 1.0


def test_latency_simple_and_negative():
    ts = seg("ts", [tok("a")], role="TS", speaker="A", t_start=9.0,
             t_end=10.0, sequence_id="s0")
    ri = seg("ri", [tok("wat", pos="PRON_Int")], role="RI", speaker="B",
             t_start=10.4, t_end=11.0, oir_type="OpenRequest",
             sequence_id="s0")
    ds = dataset([ts, ri])
    ts_ri, ri_rs = latency(ds.sequences[0], ds)
    assert abs(ts_ri - 0.4) < 1e-9
    assert ri_rs is None

    ri2 = seg("ri", [tok("wat", pos="PRON_Int")], role="RI", speaker="B",
              t_start=9.8, t_end=11.0, oir_type="OpenRequest",
              sequence_id="s0")
    ds2 = dataset([ts, ri2])
    ts_ri2, _ = latency(ds2.sequences[0], ds2)
    assert ts_ri2 < 0


def test_extractor_deterministic_and_planted_rise(small_corpus):
    ds, root = small_corpus
    provider = wav_audio_provider(root)
    extractor = ProsodicExtractor(provider)
    m1 = extractor.transform(ds)
    m2 = ProsodicExtractor(wav_audio_provider(root)).transform(ds)
    assert np.array_equal(m1.values, m2.values, equal_nan=True)
    assert np.array_equal(m1.present, m2.present)

    # planted rising contour on repair initiations
    slope_col = m1.names.index("pitch_slope")
    by_role = {"RI": [], "RD": []}
    for i, sid in enumerate(m1.ids):
        s = ds.by_id(sid)
        if s.role in by_role and m1.present[i, slope_col]:
            by_role[s.role].append(m1.values[i, slope_col])
    assert np.mean(by_role["RI"]) > np.mean(by_role["RD"]) + 2.0
