import numpy as np
import pytest

import egghand


def random_pose(rng, frames, invalid=0.0):
    xyz = rng.uniform(-0.1, 0.1, size=(frames, 42, 3))
    xyz[:, [0, 21]] = rng.uniform(-0.3, 0.3, size=(frames, 2, 3))
    valid = rng.uniform(size=(frames, 42)) >= invalid
    return xyz, valid


def naive_metrics(pred, gt, valid):
    ade, fde, mp, mpf = [], [], [], []
    frames = gt.shape[0]
    for t in range(frames):
        for w in (0, 21):
            if not valid[t, w]:
                continue
            d = np.linalg.norm(pred[t, w] - gt[t, w])
            ade.append(d)
            if t == frames - 1:
                fde.append(d)
            for j in range(w + 1, w + 21):
                if valid[t, j]:
                    e = np.linalg.norm((pred[t, j] - pred[t, w]) - (gt[t, j] - gt[t, w]))
                    mp.append(e)
                    if t == frames - 1:
                        mpf.append(e)
    mean = lambda v: float(np.mean(v)) if v else None
    return dict(ade=mean(ade), fde=mean(fde), mpjpe=mean(mp), mpjpe_f=mean(mpf))


def test_version():
    assert egghand.__version__.count(".") == 2


def test_metrics_match_numpy_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        gt, valid = random_pose(rng, 5, invalid=0.3)
        pred, _ = random_pose(rng, 5)
        got = egghand.metrics(pred, gt, valid)
        want = naive_metrics(pred, gt, valid)
        for key, value in want.items():
            if value is None:
                assert got[key] is None
            else:
                assert abs(got[key] - value) < 1e-9


def test_losses_vanish_at_ground_truth():
    rng = np.random.default_rng(4)
    gt, valid = random_pose(rng, 3, invalid=0.1)
    out = egghand.losses(gt, gt, valid)
    assert out == {"abs": 0.0, "rel": 0.0, "pair": 0.0, "total": 0.0}


def test_cvm_extrapolates_linearly():
    rng = np.random.default_rng(5)
    obs, _ = random_pose(rng, 20)
    pred, valid = egghand.cvm_predict(obs, horizon=4)
    v = obs[19] - obs[18]
    for k in range(1, 5):
        np.testing.assert_allclose(pred[k - 1], obs[19] + k * v, atol=1e-12)
    assert valid.all()


def test_canonicalize_full_camera_is_invariant_to_world_motion():
    rng = np.random.default_rng(6)
    poses, valid = random_pose(rng, 4)

    def rotation(r):
        q = r.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ])

    cams = np.stack([np.hstack([rotation(rng), rng.normal(size=(3, 1))]) for _ in range(4)])
    g_r, g_t = rotation(rng), rng.normal(size=3)
    moved = poses @ g_r.T + g_t
    moved_cams = np.stack([np.hstack([c[:, :3] @ g_r.T, (c[:, 3] - c[:, :3] @ g_r.T @ g_t)[:, None]]) for c in cams])
    a, _ = egghand.canonicalize(poses, valid, cams, mode="full_camera")
    b, _ = egghand.canonicalize(moved, valid, moved_cams, mode="full_camera")
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_schedule_contract():
    assert egghand.lr_at(100, 2000) == 1e-3
    assert egghand.lr_at(99, 2000) <= 1e-3
    assert egghand.lr_at(1999, 2000) < egghand.lr_at(1000, 2000)


def test_stratification_breaks_ties_by_id():
    scores = [(f"id{i:03d}", 1.0) for i in range(100)]
    assert egghand.stratify_top_fraction(scores, 0.1) == [f"id{i:03d}" for i in range(10)]


def test_errors_carry_their_kind(tmp_path):
    with pytest.raises(egghand.EgghandError) as info:
        egghand.evaluate(tmp_path / "missing", baseline="cvm")
    assert info.value.kind in {"missing_file", "io"}
    with pytest.raises(egghand.EgghandError):
        egghand.metrics(np.zeros((2, 41, 3)), np.zeros((2, 41, 3)))


def test_synth_train_evaluate_smoke(tmp_path):
    splits = egghand.synth(tmp_path / "data", clips=12, frames=40, seed=1)
    assert sum(len(v) for v in splits.values()) == 12
    samples = egghand.load_samples(tmp_path / "data", "train")
    assert samples and samples[0]["obs"][0].shape == (20, 42, 3)
    first, last = egghand.train(tmp_path / "data", tmp_path / "m.ckpt", steps=5, seed=1)
    assert np.isfinite(first) and np.isfinite(last)
    report = egghand.evaluate(tmp_path / "data", model=tmp_path / "m.ckpt", split="train", strata=0.1)
    assert report["n_samples"] == len(samples)
    assert set(report["strata"]) == {"top", "all"}
    again = egghand.evaluate(tmp_path / "data", baseline="static", split="train")
    assert again == egghand.evaluate(tmp_path / "data", baseline="static", split="train")
