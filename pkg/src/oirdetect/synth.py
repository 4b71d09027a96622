"""Synthetic dialogue corpus with planted repair-initiation cues.

Repair initiations carry (independently degradable) cues: a rising pitch
contour, a final question mark, the lemma "wat", and repetition of a
token from the prior turn.  Regular-dialogue segments are flat-pitched
declaratives with rare false cues.  Audio is pitch-modulated harmonic
tone with silences; everything is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, write_wav
from .corpus import Dataset, Segment, Token, build_sequences

SR = 16000
TOKEN_S = 0.24
TOKEN_GAP_S = 0.03
HARMONIC_AMPS = (1.0, 0.5, 0.25)
RI_RISE_ST_PER_S = 6.0

NOUNS = ["driehoek", "cirkel", "vierkant", "ster", "boog", "kegel", "punt",
         "oor", "kam", "voet"]
DETS = [("de", "de"), ("het", "het"), ("een", "een")]
DEMS = [("die", "die"), ("dat", "dat")]
ADPS = ["op", "aan", "naast", "onder"]
VERBS = [("zei", "zeggen"), ("staat", "staan"), ("heeft", "hebben"),
         ("zie", "zien")]
AUXS = [("is", "zijn"), ("kan", "kunnen")]
PRS = [("je", "je"), ("ik", "ik"), ("hij", "hij")]
ADVS = ["nog", "zo", "hier"]
CCONJS = ["en", "of"]
INTJS = ["uh", "oh", "ja"]


@dataclass
class _PlannedSegment:
    speaker: str
    role: str
    oir_type: str | None
    sequence_id: str | None
    tokens: list[Token]      # without timing yet
    rising: bool
    base_hz: float


def _tok(text, lemma, pos, is_coref=False):
    return Token(text=text, lemma=lemma, pos=pos, is_coref=is_coref)


def _declarative(rng, noun: str | None = None,
                 coref: bool = False) -> list[Token]:
    if noun is None:
        noun = NOUNS[rng.integers(len(NOUNS))]
    det = DETS[rng.integers(len(DETS))]
    verb = VERBS[rng.integers(len(VERBS))]
    adp = ADPS[rng.integers(len(ADPS))]
    toks = [_tok(det[0], det[1], "DET"), _tok(noun, noun, "NOUN"),
            _tok(verb[0], verb[1], "VERB"), _tok(adp, adp, "ADP")]
    if coref:
        dem = DEMS[rng.integers(len(DEMS))]
        toks.append(_tok(dem[0], dem[1], "PRON_Dem", is_coref=True))
    else:
        noun2 = NOUNS[rng.integers(len(NOUNS))]
        toks.append(_tok(noun2, noun2, "NOUN"))
    if rng.random() < 0.25:
        adv = ADVS[rng.integers(len(ADVS))]
        toks.append(_tok(adv, adv, "ADV"))
    if rng.random() < 0.15:
        cc = CCONJS[rng.integers(len(CCONJS))]
        toks.append(_tok(cc, cc, "CCONJ"))
    return toks


def _ri_tokens(rng, trouble_noun: str, with_text_cues: bool,
               with_repetition: bool) -> list[Token]:
    toks: list[Token] = []
    if rng.random() < 0.3:
        intj = INTJS[rng.integers(len(INTJS))]
        toks.append(_tok(intj, intj, "INTJ"))
    if with_text_cues:
        verb = VERBS[0]  # "zei"
        prs = PRS[rng.integers(len(PRS))]
        toks += [_tok("wat", "wat", "PRON_Int"),
                 _tok(verb[0], verb[1], "VERB"),
                 _tok(prs[0], prs[1], "PRON_Prs")]
    else:
        toks += _declarative(rng)[:3]
    if with_repetition:
        toks.append(_tok(trouble_noun, trouble_noun, "NOUN"))
    if with_text_cues:
        toks.append(_tok("?", "?", "PUNCT"))
    return toks


def _plan_dialogue(rng, dyad: str, speakers: tuple[str, str],
                   bases: tuple[float, float], dialogue_idx: int,
                   n_ri: int, n_rd: int, noise: float
                   ) -> list[_PlannedSegment]:
    events = ["OIR"] * n_ri + ["RD"] * n_rd
    rng.shuffle(events)
    planned: list[_PlannedSegment] = []
    seq_counter = 0
    prev_noun: str | None = None
    for event in events:
        a = int(rng.integers(2))
        spk_a, spk_b = speakers[a], speakers[1 - a]
        base_a, base_b = bases[a], bases[1 - a]
        if event == "RD":
            reuse = prev_noun if (prev_noun and rng.random() < 0.3) else None
            toks = _declarative(rng, noun=reuse, coref=rng.random() < 0.2)
            if rng.random() < noise * 0.25:
                toks.append(_tok("?", "?", "PUNCT"))
            rising = rng.random() < noise * 0.25
            planned.append(_PlannedSegment(spk_a, "RD", None, None, toks,
                                           rising, base_a))
            prev_noun = next((t.text for t in toks if t.pos == "NOUN"), None)
        else:
            seq_id = f"d{dialogue_idx:04d}_s{seq_counter}"
            seq_counter += 1
            trouble_noun = NOUNS[rng.integers(len(NOUNS))]
            ts_toks = _declarative(rng, noun=trouble_noun)
            planned.append(_PlannedSegment(spk_a, "TS", None, seq_id,
                                           ts_toks, False, base_a))
            text_cues = rng.random() >= noise
            repetition = rng.random() >= noise
            rising = rng.random() >= noise
            oir_type = ["OpenRequest", "RestrictedRequest",
                        "RestrictedOffer"][rng.integers(3)]
            planned.append(_PlannedSegment(
                spk_b, "RI", oir_type, seq_id,
                _ri_tokens(rng, trouble_noun, text_cues, repetition),
                rising, base_b))
            if rng.random() >= noise:
                rs_toks = [t for t in ts_toks][:2] \
                    + [_tok(trouble_noun, trouble_noun, "NOUN")]
            else:
                rs_toks = _declarative(rng)
            planned.append(_PlannedSegment(spk_a, "RS", None, seq_id,
                                           rs_toks, False, base_a))
            prev_noun = trouble_noun
    return planned


def _render_segment(rng, plan: _PlannedSegment
                    ) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Synthesize audio for one segment; returns (samples, token spans)."""
    n_tok = len(plan.tokens)
    spans = []
    t = 0.0
    for _ in range(n_tok):
        dur = TOKEN_S * float(rng.uniform(0.85, 1.15))
        spans.append((t, t + dur))
        t += dur + TOKEN_GAP_S
    total = t
    n = int(total * SR)
    tt = np.arange(n) / SR

    base = plan.base_hz * 2 ** (float(rng.uniform(-1, 1)) / 12)
    st = np.zeros(n)
    if plan.rising:
        st += RI_RISE_ST_PER_S * tt
    st += 0.3 * np.sin(2 * np.pi * 2.5 * tt + float(rng.uniform(0, 6.28)))
    f0 = base * 2 ** (st / 12)
    phase = 2 * np.pi * np.cumsum(f0) / SR

    env = np.zeros(n)
    ramp = int(0.025 * SR)
    for a, b in spans:
        ia, ib = int(a * SR), min(n, int(b * SR))
        seg_env = np.ones(ib - ia)
        m = min(ramp, len(seg_env) // 2)
        win = np.sin(np.linspace(0, np.pi / 2, m)) ** 2
        seg_env[:m] *= win
        seg_env[-m:] *= win[::-1]
        env[ia:ib] = seg_env

    amp = 0.22 * float(rng.uniform(0.8, 1.2))
    sig = np.zeros(n)
    for h, ha in enumerate(HARMONIC_AMPS, start=1):
        sig += ha * np.sin(h * phase)
    sig *= amp / sum(HARMONIC_AMPS) * env
    return sig, spans


def synth_corpus(n_dialogues: int, ri_fraction: float, noise_level: float,
                 seed: int, out_dir: str | Path,
                 events_per_dialogue: int = 4) -> Dataset:
    """Generate a corpus of dialogues plus one WAV file per dialogue under
    out_dir/audio; returns the Dataset (audio_ref paths relative to
    out_dir)."""
    if not (0 < ri_fraction < 1):
        raise ValueError("ri_fraction must be in (0, 1)")
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_ri = max(1, round(events_per_dialogue * ri_fraction))
    n_rd = max(1, events_per_dialogue - n_ri)

    segments: list[Segment] = []
    for d in range(n_dialogues):
        dyad = f"dyad{d % 10:02d}"
        speakers = (f"{dyad}_A", f"{dyad}_B")
        bases = (float(rng.uniform(105, 150)), float(rng.uniform(175, 250)))
        planned = _plan_dialogue(rng, dyad, speakers, bases, d,
                                 n_ri, n_rd, noise_level)
        dialogue_id = f"dlg{d:04d}"
        wav_rel = f"audio/{dialogue_id}.wav"
        chunks: list[np.ndarray] = []
        t_cursor = float(rng.uniform(0.2, 0.5))
        chunks.append(np.zeros(int(t_cursor * SR)))
        for s_idx, plan in enumerate(planned):
            sig, spans = _render_segment(rng, plan)
            seg_start = t_cursor
            seg_end = t_cursor + len(sig) / SR
            tokens = tuple(
                Token(text=t.text, lemma=t.lemma, pos=t.pos,
                      is_coref=t.is_coref, nonverbal=t.nonverbal,
                      t_start=round(seg_start + a, 4),
                      t_end=round(seg_start + b, 4))
                for t, (a, b) in zip(plan.tokens, spans))
            segments.append(Segment(
                segment_id=f"{dialogue_id}_x{s_idx:03d}",
                dialogue_id=dialogue_id, dyad_id=dyad, speaker=plan.speaker,
                t_start=round(seg_start, 4), t_end=round(seg_end, 4),
                tokens=tokens, role=plan.role, oir_type=plan.oir_type,
                sequence_id=plan.sequence_id, audio_path=wav_rel,
                audio_channel=0))
            chunks.append(sig)
            gap = float(rng.uniform(0.3, 0.7))
            chunks.append(np.zeros(int(gap * SR)))
            t_cursor = seg_end + gap
        audio = np.concatenate(chunks)
        write_wav(out_dir / wav_rel, AudioBuffer(audio, SR))

    segments.sort(key=lambda s: (s.dialogue_id, s.t_start, s.segment_id))
    return Dataset(segments=tuple(segments),
                   sequences=build_sequences(segments))
