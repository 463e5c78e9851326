import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinepose import posefile
from kinepose.data import (
    SyntheticSpec,
    build_windows,
    fill_invisible,
    generate,
    split_by_sequence,
    window_starts,
    windows,
)
from kinepose.errors import ConfigError, PoseFileError, VersionError
from kinepose.kinematics import PoseSequence
from kinepose.metrics import accel_error, second_difference


def small(**kw):
    base = dict(n_sequences=3, frames=20, keypoints=4, dims=2, seed=7)
    base.update(kw)
    return SyntheticSpec(**base)


# generation


def test_identity_corruption():
    for clean, noisy in generate(small(sigma=0.0, dropout=0.0, burst_prob=0.0)):
        assert clean.coords.tobytes() == noisy.coords.tobytes()
        assert noisy.visibility.all()


def test_noise_statistics():
    spec = small(n_sequences=10, frames=50, keypoints=2, sigma=0.05, dropout=0.0)
    resid = np.concatenate([(n.coords - c.coords).ravel() for c, n in generate(spec)])
    assert resid.size >= 1000
    assert abs(resid.std() - 0.05) <= 0.05 * 0.05


def test_full_dropout_holds_first_frame():
    for _, noisy in generate(small(dropout=1.0)):
        assert not noisy.visibility.any()
        np.testing.assert_array_equal(noisy.coords, np.broadcast_to(noisy.coords[0], noisy.coords.shape))


def test_hold_dropout_repeats_previous_value():
    clean, noisy = generate(small(n_sequences=1, frames=60, dropout=0.3))[0]
    hidden = np.argwhere(~noisy.visibility)
    hidden = hidden[hidden[:, 0] > 0]
    assert len(hidden)
    for t, j in hidden:
        np.testing.assert_array_equal(noisy.coords[t, j], noisy.coords[t - 1, j])


def test_jump_dropout_and_bursts_move_points():
    spec = small(dropout=0.5, dropout_behavior="jump", jump_scale=0.5, sigma=0.0)
    clean, noisy = generate(spec)[0]
    moved = np.linalg.norm(noisy.coords - clean.coords, axis=-1) > 0
    np.testing.assert_array_equal(moved, ~noisy.visibility)
    spec = small(burst_prob=1.0, sigma=0.0, dropout=0.0)
    clean, noisy = generate(spec)[0]
    assert np.all(np.linalg.norm(noisy.coords - clean.coords, axis=-1) > 0)


def test_determinism_and_seed_sensitivity():
    a, b = generate(small()), generate(small())
    for (ca, na), (cb, nb) in zip(a, b):
        assert ca.coords.tobytes() == cb.coords.tobytes()
        assert na.coords.tobytes() == nb.coords.tobytes()
        assert na.visibility.tobytes() == nb.visibility.tobytes()
    c = generate(small(seed=8))
    assert a[0][0].coords.tobytes() != c[0][0].coords.tobytes()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.001, 0.1))
def test_clean_accel_bounded_and_corruption_is_jittery(seed, sigma):
    spec = small(n_sequences=2, seed=seed, sigma=sigma)
    bound = spec.accel_bound()
    for clean, noisy in generate(spec):
        acc = np.linalg.norm(second_difference(clean.coords), axis=-1)
        assert acc.max() <= bound + 1e-12
        assert accel_error(clean.coords, clean.coords) == 0.0
        assert accel_error(noisy.coords, clean.coords) > 0.0


@pytest.mark.parametrize(
    "field,value",
    [("frames", 0), ("keypoints", 0), ("sigma", -0.1), ("dropout", 1.5), ("dims", 4), ("dropout_behavior", "skip")],
)
def test_invalid_spec_names_field(field, value):
    with pytest.raises(ConfigError, match=field):
        small(**{field: value}).validate()


def test_spec_rejects_unknown_field():
    with pytest.raises(ConfigError, match="noise_level"):
        SyntheticSpec.from_dict({"noise_level": 1})


def test_per_joint_sigma():
    spec = small(keypoints=3, sigma=[0.0, 0.1, 0.0], dropout=0.0)
    clean, noisy = generate(spec)[0]
    diff = np.abs(noisy.coords - clean.coords)
    assert not diff[:, [0, 2]].any()
    assert diff[:, 1].any()
    with pytest.raises(ConfigError):
        small(keypoints=3, sigma=[0.1, 0.1]).validate()


# pose files


def test_round_trip_bit_identical(tmp_path):
    for clean, noisy in generate(small()):
        for s in (clean, noisy):
            path = tmp_path / f"{s.seq_id}.pose"
            posefile.save(s, path)
            back = posefile.load(path)
            assert back.coords.tobytes() == s.coords.tobytes()
            assert back.visibility.tobytes() == s.visibility.tobytes()
            assert (back.seq_id, back.source, back.fps, back.joint_names) == (s.seq_id, s.source, s.fps, s.joint_names)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.sampled_from([2, 3]), st.integers(0, 2**32 - 1))
def test_round_trip_property(T, K, D, seed):
    rng = np.random.default_rng(seed)
    coords = rng.normal(size=(T, K, D)) * 10.0 ** rng.integers(-8, 8)
    seq = PoseSequence(coords, rng.uniform(size=(T, K)) < 0.5, joint_groups={"a": [0]})
    back = posefile.loads(posefile.dumps(seq))
    assert back.coords.tobytes() == seq.coords.tobytes()
    assert back.visibility.tobytes() == seq.visibility.tobytes()
    assert back.joint_groups == {"a": [0]}


def one_seq():
    return generate(small(n_sequences=1, frames=5))[0][1]


def test_truncated_file():
    text = posefile.dumps(one_seq())
    lines = text.splitlines()
    for cut in (1, 3, len(lines) - 1):
        with pytest.raises(PoseFileError, match="truncated"):
            posefile.loads("\n".join(lines[:cut]) + "\n")


def test_keypoint_mismatch_names_frame():
    lines = posefile.dumps(one_seq()).splitlines()
    parts = lines[4].split()
    lines[4] = " ".join(parts[:-2])  # frame 2 loses one joint's coordinates
    with pytest.raises(PoseFileError, match=r"line 5: frame 2"):
        posefile.loads("\n".join(lines))
    lines = posefile.dumps(one_seq()).splitlines()
    lines[3] = lines[3].replace("frame 1 1111", "frame 1 111", 1)
    with pytest.raises(PoseFileError, match="frame 1"):
        posefile.loads("\n".join(lines))


def test_version_mismatch():
    text = posefile.dumps(one_seq()).replace("posefile 1", "posefile 2", 1)
    with pytest.raises(VersionError, match="version 2"):
        posefile.loads(text)


def test_bad_number_and_trailing_garbage():
    lines = posefile.dumps(one_seq()).splitlines()
    parts = lines[2].split()
    parts[3] = "abc"
    bad = lines[:2] + [" ".join(parts)] + lines[3:]
    with pytest.raises(PoseFileError, match="non-numeric"):
        posefile.loads("\n".join(bad))
    with pytest.raises(PoseFileError, match="after end"):
        posefile.loads("\n".join(lines + ["frame 9"]))


def test_save_leaves_no_temp_files(tmp_path):
    posefile.save(one_seq(), tmp_path / "a.pose")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.pose"]


# windows


def test_window_enumeration():
    assert window_starts(10, 10, 10) == [0]
    assert window_starts(12, 10, 2) == [0, 2]
    assert window_starts(9, 10, 1) == []
    assert window_starts(13, 10, 2, cover_tail=True) == [0, 2, 3]


def test_windows_pair_inputs_with_clean_targets():
    clean, noisy = generate(small(n_sequences=1, frames=12, dropout=0.0))[0]
    ws = list(windows(noisy, 10, 2, 2, target=clean))
    assert [w.start for w in ws] == [0, 2]
    w = ws[1]
    np.testing.assert_array_equal(w.inputs, noisy.flat()[[2, 4, 6, 8, 10]])
    np.testing.assert_array_equal(w.target, clean.flat()[2:12])
    full = list(windows(noisy, 10, 1, 10))[0]
    assert full.inputs.shape == (10, noisy.keypoints * noisy.dims)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 30), st.integers(1, 12), st.integers(1, 4), st.integers(1, 5))
def test_window_index_maps(frames, T, N, stride):
    if T // N < 1:
        return
    seq = PoseSequence(np.zeros((frames, 2, 2)))
    for w in windows(seq, T, N, stride):
        assert np.all(np.diff(w.frame_idx) > 0)
        assert set(w.frame_idx) <= set(range(w.start, w.start + T))
        assert w.frame_idx[-1] < frames


def test_annotation_mask_thins_supervision():
    clean, noisy = generate(small(n_sequences=1, frames=12))[0]
    w = next(windows(noisy, 8, 2, 4, target=clean, annotate_every=3))
    np.testing.assert_array_equal(w.target_vis.any(axis=1), [True, False, False, True, False, False, True, False])


def test_build_windows_skips_short_sequences():
    pairs = generate(small(n_sequences=2, frames=6)) + generate(small(n_sequences=1, frames=12))
    ws = build_windows(pairs, T=8, N=2, stride=2)
    assert ws.skipped == 2
    assert len(ws) == 3
    assert ws.inputs.shape == (3, 4, 8)


def test_fill_invisible_uses_neighbours():
    c = np.arange(8, dtype=float).reshape(4, 1, 2)
    c[0] = np.nan
    c[2] = np.nan
    out = fill_invisible(c, np.isfinite(c).all(axis=-1))
    np.testing.assert_array_equal(out[:, 0, 0], [2.0, 2.0, 2.0, 6.0])


def test_split_by_sequence():
    pairs = generate(small(n_sequences=10))
    train, val = split_by_sequence(pairs, 0.2, seed=1)
    assert len(val) == 2 and len(train) == 8
    ids = {c.seq_id for c, _ in train}
    assert not ids & {c.seq_id for c, _ in val}
    again = split_by_sequence(pairs, 0.2, seed=1)[1]
    assert [c.seq_id for c, _ in again] == [c.seq_id for c, _ in val]
