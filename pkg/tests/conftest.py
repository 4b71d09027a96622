import numpy as np
import pytest

from oirdetect.audio import AudioBuffer
from oirdetect.corpus import Dataset, Segment, Token, build_sequences

SR = 16000


def tone(freq: float, dur: float, sr: int = SR, amp: float = 0.3,
         phase: float = 0.0) -> AudioBuffer:
    t = np.arange(int(dur * sr)) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def glide(f_start: float, f_end: float, dur: float, sr: int = SR,
          amp: float = 0.3) -> AudioBuffer:
    """Exponential (constant st/s) frequency glide."""
    t = np.arange(int(dur * sr)) / sr
    f = f_start * (f_end / f_start) ** (t / dur)
    phase = 2 * np.pi * np.cumsum(f) / sr
    return AudioBuffer(amp * np.sin(phase), sr)


def tok(text, lemma=None, pos="NOUN", is_coref=False, nonverbal=None,
        t_start=None, t_end=None) -> Token:
    return Token(text=text, lemma=lemma if lemma is not None else text,
                 pos=pos, is_coref=is_coref, nonverbal=nonverbal,
                 t_start=t_start, t_end=t_end)


def seg(segment_id, tokens, role="RD", speaker="A", t_start=0.0, t_end=1.0,
        dialogue_id="dlg0", dyad_id="dy0", oir_type=None, sequence_id=None,
        audio_path="", audio_channel=0) -> Segment:
    return Segment(segment_id=segment_id, dialogue_id=dialogue_id,
                   dyad_id=dyad_id, speaker=speaker, t_start=t_start,
                   t_end=t_end, tokens=tuple(tokens), role=role,
                   oir_type=oir_type, sequence_id=sequence_id,
                   audio_path=audio_path, audio_channel=audio_channel)


def dataset(segments) -> Dataset:
    segments = sorted(segments,
                      key=lambda s: (s.dialogue_id, s.t_start, s.segment_id))
    return Dataset(segments=tuple(segments),
                   sequences=build_sequences(segments))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """20 synthetic dialogues with audio, split, shared across tests."""
    from oirdetect.corpus import split_dataset
    from oirdetect.synth import synth_corpus
    root = tmp_path_factory.mktemp("smallcorpus")
    ds = synth_corpus(20, 0.5, 0.2, 11, root)
    ds = split_dataset(ds, (0.7, 0.15, 0.15), 11)
    return ds, root
