import math

import pytest

import menode


def test_toy_data_follows_closed_form():
    data = menode.generate_toy(seed=3, n_subjects=5)
    assert len(data) == 5
    assert data.split == 10
    info = data.info(2)
    x = data.full(2)
    for t, row in zip(data.times, x):
        assert row[0] == pytest.approx(info.true_z0[0] * math.exp(info.true_w[0] * t), rel=1e-12)


def test_same_seed_same_csv():
    a = menode.generate_grouped_2d(4, 20, seed=1).to_csv()
    b = menode.generate_grouped_2d(4, 20, seed=1).to_csv()
    assert a == b
    assert a.startswith("subject_id,group_id,time,split,x_0,x_1")


def test_train_recovers_beta_and_roundtrips(tmp_path):
    train, test = menode.split_subjects(menode.generate_toy(seed=1, n_subjects=200))
    model = menode.Model(toy=True)
    log = model.train(train, n_z0=5, n_w=5, epochs=3, batch_size=16, learning_rate=0.01, seed=1)
    assert log.count("epoch=") == 3
    assert 0.25 < model.recover(train).beta[0] < 0.36
    path = tmp_path / "model.ckpt"
    model.save(path)
    back = menode.Model.load(path)
    assert back.config == model.config
    assert back.reconstruction_mse(test, seed=2) == model.reconstruction_mse(test, seed=2)
    mse, pred = back.calibrate_predict(test, 0, n_candidates=32)
    assert mse < 1e-3 and len(pred) == 20
    assert test.heldout_reads == 0


def test_wong_zakai_mean_matches_lognormal():
    times, mean, var = menode.wong_zakai_moments(
        lambda z, t: 0.3 * z, lambda z, t: 0.1 * z, 1.3, n_paths=4000, seed=5)
    exact = 1.3 * math.exp(0.3 * 3 + 0.01 * 9 / 2)
    se = math.sqrt(var[-1] / 4000)
    assert abs(mean[-1] - exact) < 4 * se


def test_errors_map_to_python():
    with pytest.raises(menode.ContractError):
        menode.Model(toy=True, no_such_setting=1)
    with pytest.raises(menode.Error):
        menode.generate_toy(seed=0, sigma=-1.0)
    code, _, err = menode.run_cli(["generate", "--out", "x.csv"])
    assert code == 2 and "seed" in err
