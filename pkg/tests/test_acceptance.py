"""Acceptance gate: one test per release criterion, each printing a single
PASS/FAIL line (run with -s to see them as they complete)."""

import time
from contextlib import contextmanager

import numpy as np
import pytest
import torch

from conftest import SR, dataset, glide, seg, tok, tone


@contextmanager
def _criterion(name):
    try:
        yield
    except BaseException:
        print(f"[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"[ACCEPTANCE] {name}: PASS")


def test_dsp_oracle_suite():
    from oirdetect.audio import AudioBuffer
    from oirdetect.pitch import pitch_stats, track_pitch
    from oirdetect.prosody import (detect_pauses, intensity_track,
                                   voice_quality)
    with _criterion("dsp-oracle-suite"):
        t0 = time.perf_counter()
        # pure tone pitch
        track = track_pitch(tone(220, 1.0))
        assert abs(track.f0[track.voiced].mean() - 220) < 2.0
        # octave glide slope
        stats, _ = pitch_stats(track_pitch(glide(100, 200, 1.0)))
        assert abs(stats["pitch_slope"] - 12.0) < 0.5
        # voice quality of a clean tone
        audio = tone(220, 1.0)
        jitter, _, hnr = voice_quality(audio, track_pitch(audio))
        assert jitter < 0.5
        assert hnr > 25.0
        # one short medial pause of 0.3 s
        sig = np.concatenate([tone(220, 1.0).samples,
                              np.zeros(int(0.3 * SR)),
                              tone(220, 1.0).samples])
        buf = AudioBuffer(sig, SR)
        pauses, _, _ = detect_pauses(intensity_track(buf), len(sig) / SR)
        assert len(pauses) == 1
        assert pauses[0].category == "short"
        assert abs(pauses[0].duration - 0.30) < 0.02
        # amplitude invariance of f0
        quiet = track_pitch(tone(220, 1.0, amp=0.05))
        loud = track_pitch(tone(220, 1.0, amp=0.5))
        both = quiet.voiced & loud.voiced
        assert np.max(np.abs(quiet.f0[both] - loud.f0[both])) < 0.1
        assert time.perf_counter() - t0 < 30.0


def test_semitone_normalization_math():
    from oirdetect.pitch import hz_to_semitones
    from oirdetect.prosody import SpeakerBaseline, normalize_to_baseline
    with _criterion("semitone-normalization-math"):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = rng.uniform(20, 2000, size=2)
            assert abs(hz_to_semitones(a, b) + hz_to_semitones(b, a)) < 1e-9
            assert abs(hz_to_semitones(2 * a, a) - 12.0) < 1e-9
        base = SpeakerBaseline("A", pitch_mean=180, pitch_std=20,
                               pitch_min=140, pitch_max=240,
                               intensity_mean=0, intensity_std=0,
                               intensity_min=0, intensity_max=0, n_segments=5)
        z, rel, pos = normalize_to_baseline(220, base, "pitch")
        assert abs(z - 2.0) < 1e-9
        assert abs(rel - 22.22222222222222) < 1e-9
        assert abs(pos - 0.8) < 1e-9


def test_linguistic_oracle_suite():
    from oirdetect.linguistic import (other_repetition_ratio,
                                      segment_features,
                                      select_frequent_bigrams)
    with _criterion("linguistic-oracle-suite"):
        ts = seg("ts", [tok("op", pos="ADP"), tok("dat", pos="PRON_Dem"),
                        tok("driehoek")],
                 role="TS", speaker="A", t_start=0, t_end=1,
                 sequence_id="s0")
        ri = seg("ri", [tok("wat", pos="PRON_Int"),
                        tok("zei", "zeggen", pos="VERB"),
                        tok("je", pos="PRON_Prs"), tok("?", pos="PUNCT")],
                 role="RI", speaker="B", t_start=1.4, t_end=2,
                 oir_type="OpenRequest", sequence_id="s0")
        rs = seg("rs", [tok("op", pos="ADP"), tok("die", pos="PRON_Dem"),
                        tok("driehoek")],
                 role="RS", speaker="A", t_start=2.4, t_end=3,
                 sequence_id="s0")
        assert other_repetition_ratio(rs, [ts]) == pytest.approx(2 / 3)
        vocab = select_frequent_bigrams(dataset([ts, ri, rs]), k=5)
        values, _ = segment_features(ri, vocab)
        assert values["ends_with_question_mark"] == 1.0
        assert values["contains_wat"] == 1.0


def test_context_assembler_properties():
    from oirdetect.context import ContextConfig, assemble_micro_context
    with _criterion("context-assembler-properties"):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            counts = rng.integers(1, 13, size=int(rng.integers(1, 13)))
            segs = [seg(f"s{i}", [tok(f"w{i}_{j}") for j in range(n)],
                        speaker="AB"[i % 2], t_start=float(i),
                        t_end=float(i) + 0.9)
                    for i, n in enumerate(counts)]
            i = int(rng.integers(len(segs)))
            mode = ["Past", "Future", "Current", "Full"][
                int(rng.integers(4))]
            window = "max" if rng.random() < 0.25 else int(rng.integers(13))
            budget = int(rng.integers(12, 61))
            ctx = assemble_micro_context(
                segs, i, ContextConfig(mode, window, budget))
            # budget never exceeded (the target itself always survives)
            assert ctx.n_content_tokens() <= max(budget, int(counts[i]))
            order = [int(s[1:]) for s in ctx.segment_ids]
            assert f"s{i}" in ctx.segment_ids
            assert order == sorted(order)
            if mode == "Past":
                assert all(j <= i for j in order)
            if mode == "Future":
                assert all(j >= i for j in order)
            if mode == "Current" or window == 0:
                assert ctx.segment_ids == (f"s{i}",)
        # whole-segment truncation drops last-added first
        segs = [seg(f"s{i}", [tok(f"w{i}_{j}") for j in range(n)],
                    speaker="AB"[i % 2], t_start=float(i),
                    t_end=float(i) + 0.9)
                for i, n in enumerate([9, 2, 3, 2, 2])]
        ctx = assemble_micro_context(segs, 2,
                                     ContextConfig("Full", 2, max_tokens=9))
        assert ctx.segment_ids == ("s1", "s2", "s3")


def _training_bundle(n=16, seed=7):
    rng = np.random.default_rng(seed)
    y = np.array([0, 1] * (n // 2))
    return {
        "text_emb": rng.normal(size=(n, 12)) + y[:, None] * 2.0,
        "audio_emb": rng.normal(size=(n, 10)),
        "ling": (rng.normal(size=(n, 6)) + y[:, None],
                 np.ones((n, 6), dtype=bool)),
        "pros": (rng.normal(size=(n, 8)), np.ones((n, 8), dtype=bool)),
    }, y


def test_model_correctness(tmp_path):
    from oirdetect.evaluation import compute_metrics
    from oirdetect.model import FusionClassifier, FusionNet
    with _criterion("model-correctness"):
        t0 = time.perf_counter()
        dims = {"text_emb": 8, "audio_emb": 6, "ling": 5, "pros": 7}
        torch.manual_seed(0)
        net = FusionNet(dims, d_shared=16, n_heads=4, dropout=0.0).double()
        g = torch.Generator().manual_seed(0)
        x = {m: torch.randn(4, d, generator=g, dtype=torch.float64)
             for m, d in dims.items()}
        y = torch.tensor([0., 1., 1., 0.], dtype=torch.float64)

        # finite-difference gradient check on >= 25 parameters
        loss_fn = torch.nn.BCEWithLogitsLoss()
        net.zero_grad()
        loss_fn(net(x), y).backward()
        rng = np.random.default_rng(3)
        checked = 0
        for _, p in net.named_parameters():
            flat, grad = p.detach().view(-1), p.grad.view(-1)
            for _ in range(2):
                i = int(rng.integers(flat.numel()))
                eps = 1e-6
                with torch.no_grad():
                    flat[i] += eps
                    lp = float(loss_fn(net(x), y))
                    flat[i] -= 2 * eps
                    lm = float(loss_fn(net(x), y))
                    flat[i] += eps
                fd = (lp - lm) / (2 * eps)
                an = float(grad[i])
                assert abs(fd - an) / max(abs(fd), abs(an), 1e-8) < 1e-4
                checked += 1
        assert checked >= 25

        # modality-token permutation invariance of the fusion block
        def pooled(tokens):
            out, _ = net.attn(tokens, tokens, tokens, need_weights=False)
            h = net.ln1(tokens + out)
            h = net.ln2(h + net.ffn(h))
            return h.mean(dim=1)

        with torch.no_grad():
            tokens = torch.stack(
                [torch.tanh(net.proj[m](x[m])) for m in net.modalities],
                dim=1)
            perm = tokens[:, [2, 0, 3, 1]]
            diff = (pooled(tokens) - pooled(perm)).abs().max()
        assert float(diff) < 1e-6

        # seed determinism: two runs, identical checkpoint bytes
        bundle, labels = _training_bundle()
        paths = []
        for run in range(2):
            clf = FusionClassifier(d_shared=16, seed=3, lr=1e-3,
                                   max_epochs=5)
            clf.fit(bundle, labels)
            path = tmp_path / f"run{run}.oirm"
            clf.save(path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

        # 16-sample separable set reaches train F1 = 1.0
        clf = FusionClassifier(d_shared=32, seed=3, lr=1e-3)
        clf.fit(bundle, labels)
        _, _, f1 = compute_metrics(clf.predict(bundle), labels)
        assert f1 == 100.0
        assert time.perf_counter() - t0 < 120.0


def test_metrics_worked_examples():
    from oirdetect.evaluation import compute_metrics
    with _criterion("metrics-worked-examples"):
        assert compute_metrics([1, 0, 1, 0],
                               [1, 0, 1, 0]) == (100.0, 100.0, 100.0)
        preds = [1] * 8 + [1] * 2 + [0] * 2 + [0] * 8
        golds = [1] * 8 + [0] * 2 + [1] * 2 + [0] * 8
        p, r, f1 = compute_metrics(preds, golds)
        assert abs(p - 80.0) < 0.01 and abs(r - 80.0) < 0.01
        assert abs(f1 - 80.0) < 0.01
        p, r, f1 = compute_metrics([1] * 10, [1] * 5 + [0] * 5)
        assert abs(p - 50.0) < 0.01 and abs(r - 100.0) < 0.01
        assert abs(f1 - 33.33) < 0.01


def test_explainability():
    from oirdetect.explain import shap_values, synergy
    with _criterion("explainability"):
        rng = np.random.default_rng(0)
        # efficiency on a nonlinear 10-feature model
        f = lambda X: np.sin(X).sum(axis=1) + np.prod(X[:, :3], axis=1)
        x = rng.normal(size=10)
        bg = rng.normal(size=(6, 10))
        phi, base = shap_values(f, x, bg)
        assert abs(base + phi.sum() - f(x[None])[0]) < 1e-6
        # linear model matches the analytic attribution
        w = rng.normal(size=7)
        x = rng.normal(size=7)
        bg = rng.normal(size=(20, 7))
        phi, _ = shap_values(lambda X: X @ w, x, bg)
        assert np.max(np.abs(phi - w * (x - bg.mean(axis=0)))) < 1e-6
        # sampling mode close to exact on the 8-feature toy
        f = lambda X: np.tanh(X).sum(axis=1) + X[:, 0] * X[:, 1]
        x = rng.normal(size=8)
        bg = rng.normal(size=(8, 8))
        exact, _ = shap_values(f, x, bg)
        sampled, _ = shap_values(f, x, bg, n_samples=1500, seed=0,
                                 force_sampled=True)
        assert np.max(np.abs(exact - sampled)) < 0.02
        # synergy: near-zero for additive, large for multiplicative
        mods = ["linguistic", "linguistic", "prosodic", "prosodic"]
        x = rng.normal(size=4)
        bg = rng.normal(size=(10, 4))
        lin = lambda X: X @ np.array([1.0, -2.0, 0.5, 3.0])
        assert abs(synergy(lin, x, bg, 0, 2, mods, seed=0)) < 0.01
        mul = lambda X: X[:, 0] * X[:, 2]
        assert synergy(mul, np.array([2.0, 0.0, 2.0, 0.0]),
                       np.zeros((5, 4)), 0, 2, mods, seed=0) > 0.1


def test_end_to_end_synthetic(tmp_path_factory):
    from oirdetect.corpus import split_dataset
    from oirdetect.prosody import wav_audio_provider
    from oirdetect.scenarios import ScenarioRunner
    from oirdetect.synth import synth_corpus
    with _criterion("end-to-end-synthetic"):
        t0 = time.perf_counter()
        root = tmp_path_factory.mktemp("e2e")
        claim_a, claim_b = [], []
        claim_c = False
        for run_seed, n_dialogues in [(42, 200), (7, 120), (11, 120),
                                      (23, 120), (31, 120)]:
            out = root / f"seed{run_seed}"
            ds = synth_corpus(n_dialogues, 0.5, 0.3, run_seed, out)
            ds = split_dataset(ds, (0.7, 0.15, 0.15), run_seed)
            runner = ScenarioRunner(ds, wav_audio_provider(out),
                                    seed=run_seed)
            runner.prepare()
            f1 = {}
            for scenario in ("Text_Ling", "Audio_Pros", "Multi_LingPros"):
                _, (_, _, f) = runner.run_holdout(scenario, "Full(2)")
                f1[scenario] = f
            claim_a.append(f1["Multi_LingPros"]
                           >= max(f1["Text_Ling"], f1["Audio_Pros"]))
            ctx = {"Full(2)": f1["Multi_LingPros"]}
            for tag in ("Current", "Future(max)"):
                _, (_, _, f) = runner.run_holdout("Multi_LingPros", tag)
                ctx[tag] = f
            claim_b.append(ctx["Full(2)"] >= ctx["Current"]
                           >= ctx["Future(max)"])
            if run_seed == 42:
                _, (_, _, f_ours) = runner.run_holdout("Multi_Ours",
                                                       "Full(2)")
                claim_c = f_ours >= 90.0
        assert claim_c, "full multimodal model below 90 macro-F1"
        assert sum(claim_a) >= 4, f"multimodal>=unimodal held in {claim_a}"
        assert sum(claim_b) >= 4, f"context ordering held in {claim_b}"
        assert time.perf_counter() - t0 < 600.0


def test_format_round_trips(tmp_path):
    from oirdetect.corpus import (MalformedRecord, parse_corpus,
                                  serialize_corpus)
    from oirdetect.embeddings import (BadMagic, EmbeddingStore,
                                      load_embeddings, save_embeddings)
    from oirdetect.synth import synth_corpus
    with _criterion("format-round-trips"):
        ds = synth_corpus(3, 0.5, 0.3, seed=6, out_dir=tmp_path)
        path = tmp_path / "corpus.jsonl"
        path.write_text(serialize_corpus(ds), encoding="utf-8")
        again = tmp_path / "again.jsonl"
        again.write_text(serialize_corpus(parse_corpus(path)),
                         encoding="utf-8")
        assert path.read_bytes() == again.read_bytes()
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"segment_id": "x"}\n', encoding="utf-8")
        with pytest.raises(MalformedRecord):
            parse_corpus(bad)

        store = EmbeddingStore("text", 4, "m")
        rng = np.random.default_rng(1)
        for i in range(5):
            store.put(f"s{i}", rng.normal(size=4).astype(np.float32))
        p1, p2 = tmp_path / "a.emb1", tmp_path / "b.emb1"
        save_embeddings(store, p1)
        save_embeddings(load_embeddings(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
        broken = tmp_path / "broken.emb1"
        broken.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(BadMagic):
            load_embeddings(broken)
