import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oirdetect.corpus import (DanglingSequenceRef, InsufficientRD,
                              MalformedRecord, _largest_remainder,
                              balance_dataset, build_sequences, parse_corpus,
                              serialize_corpus, split_dataset, validate_oir)

from conftest import dataset, seg, tok


def _oir_triple(seq_id="s0", dlg="dlg0", t0=0.0, minimal=True,
                ri_speaker="B"):
    ts = seg(f"{seq_id}_ts", [tok("op", pos="ADP"), tok("dat", pos="PRON_Dem"),
                              tok("driehoek")],
             role="TS", speaker="A", t_start=t0, t_end=t0 + 1,
             dialogue_id=dlg, sequence_id=seq_id)
    ri = seg(f"{seq_id}_ri", [tok("wat", pos="PRON_Int"),
                              tok("zei", "zeggen", pos="VERB"),
                              tok("je", pos="PRON_Prs"),
                              tok("?", pos="PUNCT")],
             role="RI", speaker=ri_speaker, t_start=t0 + 1.4, t_end=t0 + 2,
             dialogue_id=dlg, oir_type="OpenRequest", sequence_id=seq_id)
    rs = seg(f"{seq_id}_rs", [tok("op", pos="ADP"), tok("die", pos="PRON_Dem"),
                              tok("driehoek")],
             role="RS", speaker="A", t_start=t0 + 2.4, t_end=t0 + 3,
             dialogue_id=dlg, sequence_id=seq_id)
    return [ts, ri, rs]


def test_parse_roundtrip_byte_identical(tmp_path):
    ds = dataset(_oir_triple() + [
        seg("rd1", [tok("de", pos="DET"), tok("ster")], t_start=4, t_end=5)])
    text = serialize_corpus(ds)
    path = tmp_path / "c.jsonl"
    path.write_text(text, encoding="utf-8")
    ds2 = parse_corpus(path)
    assert serialize_corpus(ds2) == text
    assert [s.segment_id for s in ds2.segments] == \
        [s.segment_id for s in ds.segments]


def test_parse_valid_records_count(tmp_path):
    ds = dataset([seg(f"rd{i}", [tok("ster")], t_start=i, t_end=i + 0.5)
                  for i in range(3)])
    path = tmp_path / "c.jsonl"
    path.write_text(serialize_corpus(ds), encoding="utf-8")
    assert len(parse_corpus(path).segments) == 3


def test_missing_role_is_malformed_with_line_and_field(tmp_path):
    ds = dataset([seg("a", [tok("x")], t_start=0, t_end=1),
                  seg("b", [tok("y")], t_start=2, t_end=3)])
    lines = serialize_corpus(ds).splitlines()
    rec = json.loads(lines[1])
    del rec["role"]
    lines[1] = json.dumps(rec)
    path = tmp_path / "c.jsonl"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(MalformedRecord) as exc:
        parse_corpus(path)
    assert exc.value.lineno == 2
    assert exc.value.fieldname == "role"


def test_appendix_example_sequence_minimal():
    ds = dataset(_oir_triple())
    assert len(ds.sequences) == 1
    q = ds.sequences[0]
    assert q.minimal
    assert q.ts_ids and q.ri_ids and q.rs_ids


def test_dangling_sequence_without_ri():
    ts, ri, rs = _oir_triple()
    with pytest.raises(DanglingSequenceRef):
        build_sequences([ts, rs])


def test_validate_ordering_violation():
    ts, ri, rs = _oir_triple()
    ts2 = seg("s0_ts", ts.tokens, role="TS", speaker="A", t_start=5,
              t_end=6, sequence_id="s0")
    ds = dataset([ri, ts2])
    rules = {v.rule for v in validate_oir(ds)}
    assert "OrderingViolation" in rules


def test_validate_speaker_violation():
    segs = _oir_triple(ri_speaker="A")
    ds = dataset(segs)
    rules = {v.rule for v in validate_oir(ds)}
    assert "SpeakerViolation" in rules


def test_validate_well_formed_empty():
    ds = dataset(_oir_triple())
    assert validate_oir(ds) == []


def test_largest_remainder_sums_and_proportions():
    counts = _largest_remainder(np.array([3.0, 3.0, 4.0]), 10)
    assert counts.sum() == 10
    assert list(counts) == [3, 3, 4]


@given(st.lists(st.integers(1, 50), min_size=1, max_size=8),
       st.integers(0, 100))
def test_largest_remainder_property(weights, total):
    counts = _largest_remainder(np.array(weights, dtype=float), total)
    assert counts.sum() == total
    quota = np.array(weights) / sum(weights) * total
    assert np.all(np.abs(counts - quota) < 1.0)


def _balance_fixture(n_ri=293, n_rd=1000, n_dyads=7):
    segs = []
    for i in range(n_ri):
        dlg, dy = f"dlg{i % n_dyads}", f"dy{i % n_dyads}"
        t0 = (i // n_dyads) * 10.0
        for s in _oir_triple(seq_id=f"q{i}", dlg=dlg, t0=t0):
            segs.append(seg(s.segment_id, s.tokens, role=s.role,
                            speaker=s.speaker, t_start=s.t_start,
                            t_end=s.t_end, dialogue_id=dlg, dyad_id=dy,
                            oir_type=s.oir_type, sequence_id=s.sequence_id))
    for i in range(n_rd):
        dy = f"dy{i % n_dyads}"
        segs.append(seg(f"rd{i}", [tok("ster")], dialogue_id=f"dlg{i % n_dyads}",
                        dyad_id=dy, t_start=5000 + i * 2.0,
                        t_end=5000 + i * 2.0 + 1))
    return dataset(segs)


def test_balance_exact_count_and_dyad_proportions():
    ds = _balance_fixture()
    out = balance_dataset(ds, 306, seed=7)
    rd = [s for s in out.segments if s.role == "RD"]
    assert len(rd) == 306
    ri = [s for s in out.segments if s.role == "RI"]
    assert len(ri) == 293
    # per-dyad proportionality within one segment of the exact quota
    for dy in {s.dyad_id for s in rd}:
        orig = sum(1 for s in ds.segments if s.role == "RD"
                   and s.dyad_id == dy)
        kept = sum(1 for s in rd if s.dyad_id == dy)
        assert abs(kept - orig / 1000 * 306) <= 1


def test_balance_target_equals_available():
    ds = _balance_fixture(n_ri=3, n_rd=20, n_dyads=2)
    out = balance_dataset(ds, 20, seed=0)
    assert sum(1 for s in out.segments if s.role == "RD") == 20


def test_balance_deterministic():
    ds = _balance_fixture(n_ri=5, n_rd=50, n_dyads=3)
    a = balance_dataset(ds, 20, seed=5)
    b = balance_dataset(ds, 20, seed=5)
    assert [s.segment_id for s in a.segments] == \
        [s.segment_id for s in b.segments]


def test_balance_insufficient_rd():
    ds = _balance_fixture(n_ri=2, n_rd=5, n_dyads=1)
    with pytest.raises(InsufficientRD):
        balance_dataset(ds, 6, seed=0)


def test_split_proportions_and_atomicity():
    segs = []
    for i in range(100):
        segs.extend(_oir_triple(seq_id=f"q{i}", dlg=f"dlg{i % 5}",
                                t0=i * 10.0))
    for i in range(100):
        segs.append(seg(f"rd{i}", [tok("ster")], dialogue_id=f"dlg{i % 5}",
                        t_start=5000 + i * 2.0, t_end=5001 + i * 2.0))
    ds = dataset(segs)
    out = split_dataset(ds, (0.7, 0.15, 0.15), seed=3)
    for role in ("RI", "RD"):
        per = {"train": 0, "val": 0, "test": 0}
        for s in out.segments:
            if s.role == role:
                per[out.split_assignment[s.segment_id]] += 1
        assert abs(per["train"] - 70) <= 1
        assert abs(per["val"] - 15) <= 1
        assert abs(per["test"] - 15) <= 1
    # a sequence never straddles splits
    for q in out.sequences:
        splits = {out.split_assignment[sid]
                  for sid in q.ts_ids + q.ri_ids + q.rs_ids}
        assert len(splits) == 1


def test_split_degenerate_all_train():
    ds = dataset(_oir_triple() + [seg("rd0", [tok("ster")],
                                      t_start=5, t_end=6)])
    out = split_dataset(ds, (1.0, 0.0, 0.0), seed=0)
    assert set(out.split_assignment.values()) == {"train"}


def test_serialize_with_splits_roundtrip(tmp_path):
    ds = dataset(_oir_triple() + [seg("rd0", [tok("ster")],
                                      t_start=5, t_end=6)])
    ds = split_dataset(ds, (1.0, 0.0, 0.0), seed=0)
    path = tmp_path / "c.jsonl"
    path.write_text(serialize_corpus(ds), encoding="utf-8")
    ds2 = parse_corpus(path)
    assert ds2.split_assignment == ds.split_assignment
