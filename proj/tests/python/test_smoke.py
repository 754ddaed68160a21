import math

import numpy as np
import pytest

import ess_lab as ess


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_pose_wraps_yaw_and_distances():
    a = ess.Pose(0.0, 0.0, 1.0, 370.0)
    b = ess.Pose(3.0, 4.0, 1.0, 350.0)
    assert a.yaw == pytest.approx(10.0)
    assert ess.delta_pos(a, b) == pytest.approx(5.0)
    assert ess.delta_rot(a, b) == pytest.approx(20.0)
    weight = ess.pair_weight(a, b, ess.WeightParams(alpha=2.0, beta=1.0 / 60.0))
    assert weight == pytest.approx(math.exp(-2.0 * (5.0 + 20.0 / 60.0)))


def test_find_positives_matches_brute_force():
    rng = np.random.default_rng(3)
    poses = [ess.Pose(*rng.uniform(0, 3, 2), 1.0, rng.uniform(0, 360)) for _ in range(200)]
    thr = ess.SimilarityThreshold(0.5, 20.0)
    for q in poses[:20]:
        brute = [j for j, p in enumerate(poses) if ess.delta_pos(q, p) < 0.5 and ess.delta_rot(q, p) < 20.0]
        assert ess.find_positives(q, poses, thr) == brute


def test_losses_against_numpy_reference():
    rng = np.random.default_rng(7)
    q = unit(rng.normal(size=4))
    keys = np.stack([unit(rng.normal(size=4)) for _ in range(6)])
    tau = 0.2
    logits = keys @ q / tau
    lse = np.log(np.exp(logits - logits.max()).sum()) + logits.max()
    pos = [1, 4]
    want = -np.mean(logits[pos] - lse)
    assert ess.loss_mb(q, keys, pos, tau) == pytest.approx(want, abs=1e-12)
    assert ess.loss_mw(q, keys, pos, [0.3, 0.3], tau) == pytest.approx(want, abs=1e-12)
    assert ess.loss_baseline(q, keys[0], keys[1:], tau) == pytest.approx(ess.loss_mb(q, keys, [0], tau), abs=1e-12)
    assert ess.loss_baseline(q, keys[0], np.zeros((0, 4)), tau) == pytest.approx(0.0, abs=1e-12)


def test_rotation_error_wraps():
    assert ess.rotation_error(359, 1) == 2.0
    assert ess.rotation_error(-90, 270) == 0.0


def test_cluster_metrics_silhouette_matches_sklearn():
    metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(11)
    labels = np.repeat([0, 1, 2], 30)
    points = rng.normal(size=(90, 3)) + labels[:, None] * 1.5
    got = ess.cluster_metrics(points, labels.tolist())
    assert got["silhouette"] == pytest.approx(metrics.silhouette_score(points, labels), abs=1e-8)
    assert got["calinski_harabasz"] == pytest.approx(metrics.calinski_harabasz_score(points, labels), rel=1e-8)
    assert got["davies_bouldin"] == pytest.approx(metrics.davies_bouldin_score(points, labels), abs=1e-8)


def test_render_is_deterministic_rgb():
    plan = ess.generate_plan(1)
    pose = ess.Pose(1.25, 1.25, 1.0, 45.0)
    a = ess.render(plan, pose, 0, 24, 16)
    b = ess.render(plan, pose, 0, 24, 16)
    assert a.shape == (16, 24, 3) and a.dtype == np.uint8
    assert np.array_equal(a, b)


def test_gradcheck_passes_and_detects_fault():
    assert all(r["passed"] for r in ess.gradcheck())
    assert not all(r["passed"] for r in ess.gradcheck(inject_fault=True))


def test_config_rejects_unknown_keys():
    assert '"batch_size": 64' in ess.resolve_config()
    with pytest.raises(ess.ConfigError):
        ess.resolve_config("{}", ["env.no_such_key=1"])


def test_tiny_pipeline(tmp_path, monkeypatch):
    monkeypatch.setenv("ESS_LAB_DATA_DIR", str(tmp_path))
    overrides = [
        "env.steps=600",
        "env.resolution=16",
        'train.architecture="tinyconv:in=3x16x16,conv=4-8,feature=16,proj=16,embedding=8"',
        "train.epochs=1",
        "train.batch_size=16",
        "train.queue_size=64",
        "eval.probe_epochs=1",
        "eval.localization_epochs=1",
        "eval.cluster_max_points=60",
    ]
    dataset, frames = ess.generate(overrides)
    assert frames == 600
    assert (dataset / "manifest.jsonl").exists()
    epochs = ess.train(overrides, str(tmp_path / "run"), 0)
    assert len(epochs) == 1 and math.isfinite(epochs[0]["loss"])
    records = ess.evaluate(overrides, str(tmp_path / "run"))
    assert {r["task"] for r in records} == {
        "room-probe",
        "room-probe-lighting-holdout",
        "localization",
        "cluster-metrics",
    }
