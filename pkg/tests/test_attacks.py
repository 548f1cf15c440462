import numpy as np
import pytest

from driftshade import MlpClassifier
from driftshade.attacks import (
    AttackConfig,
    adv_loss,
    attack_loss,
    attack_success_rate,
    ifgsm,
    pgd,
    pgd_init,
    run_attack,
)
from driftshade.mlp import init_params
from driftshade.objectives import LossSpec


def micro_model():
    """A 1-feature network that reduces to logits (-s, s) with s
    proportional to relu(z): positive inputs classify as malware, the
    attack gradient is a positive constant sign, and negative inputs sit
    in the dead ReLU zone with zero gradient."""
    model = MlpClassifier(hidden1=1, hidden2=1)
    params = init_params(1, 1, 1, seed=0)
    for layer in (1, 2):
        params[f"w{layer}"] = np.array([[1.0]])
        params[f"b{layer}"] = np.array([0.0])
    params["w3"] = np.array([[-1.0, 1.0]])
    params["b3"] = np.array([0.0, 0.0])
    model.params_ = params
    return model


class TestAttackConfig:
    def test_defaults_valid(self):
        cfg = AttackConfig()
        assert cfg.optimizer == "ifgsm" and cfg.mmd_batch == 256

    @pytest.mark.parametrize("kwargs", [
        {"optimizer": "newton"},
        {"step_size": -0.1},
        {"budget": 0.0},
        {"iterations": 0},
        {"mmd_batch": 0},
        {"loss": "none"},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            AttackConfig(**kwargs)


class TestIfgsm:
    def test_one_step_hand_value(self):
        model = micro_model()
        X = np.array([[0.5]])
        cfg = AttackConfig(step_size=0.1, budget=0.2, iterations=1)
        res = ifgsm(model, X, cfg)
        assert res.x_adv[0, 0] == pytest.approx(0.4, abs=1e-15)
        assert res.asr == 0.0 and not res.success[0]
        assert res.linf_mean == pytest.approx(0.1, abs=1e-15)

    def test_dead_relu_zone_freezes_input(self):
        model = micro_model()
        X = np.array([[-0.5], [0.0]])
        cfg = AttackConfig(step_size=0.1, budget=0.3, iterations=5)
        res = ifgsm(model, X, cfg)
        np.testing.assert_array_equal(res.x_adv, X)

    def test_many_steps_stop_at_box_corner(self):
        model = micro_model()
        X = np.array([[0.5]])
        cfg = AttackConfig(step_size=0.1, budget=0.15, iterations=50)
        res = ifgsm(model, X, cfg)
        # 0.5 - 0.1 = 0.4, then every later step clips back to 0.5 - 0.15
        assert res.x_adv[0, 0] == pytest.approx(0.35, abs=1e-12)
        assert not res.success[0]  # logit margin still positive at 0.35

    def test_zero_step_size_is_identity(self, small_model, small_malware_std):
        cfg = AttackConfig(step_size=0.0, budget=0.1, iterations=10)
        res = ifgsm(small_model, small_malware_std, cfg)
        np.testing.assert_array_equal(res.x_adv, small_malware_std)

    def test_box_respected(self, small_model, small_malware_std):
        for budget in (0.01, 0.1, 0.5):
            cfg = AttackConfig(step_size=0.07, budget=budget, iterations=25)
            res = ifgsm(small_model, small_malware_std, cfg)
            assert np.abs(res.x_adv - small_malware_std).max() <= budget + 1e-12

    def test_deterministic(self, small_model, small_malware_std):
        cfg = AttackConfig(step_size=0.01, budget=0.05, iterations=10)
        a = ifgsm(small_model, small_malware_std, cfg)
        b = ifgsm(small_model, small_malware_std, cfg)
        np.testing.assert_array_equal(a.x_adv, b.x_adv)

    def test_input_left_unmodified(self, small_model, small_malware_std):
        X = small_malware_std.copy()
        ifgsm(small_model, X, AttackConfig(iterations=3))
        np.testing.assert_array_equal(X, small_malware_std)

    def test_rejects_wrong_optimizer_config(self, small_model, small_malware_std):
        cfg = AttackConfig(optimizer="pgd")
        with pytest.raises(ValueError):
            ifgsm(small_model, small_malware_std, cfg)
        with pytest.raises(ValueError):
            pgd(small_model, small_malware_std, AttackConfig(optimizer="ifgsm"))


class TestPgd:
    def test_init_inside_box_and_seeded(self):
        X = np.zeros((40, 6))
        a = pgd_init(X, 0.25, seed=3)
        b = pgd_init(X, 0.25, seed=3)
        np.testing.assert_array_equal(a, b)
        assert np.abs(a - X).max() <= 0.25

    def test_init_covers_the_box(self):
        # over many seeds the uniform start reaches both box faces
        X = np.zeros((2, 2))
        lo = min(pgd_init(X, 0.1, seed=s).min() for s in range(1000))
        hi = max(pgd_init(X, 0.1, seed=s).max() for s in range(1000))
        assert lo < -0.09 and hi > 0.09

    def test_seed_changes_start_but_respects_box(self, small_model, small_malware_std):
        cfg1 = AttackConfig(optimizer="pgd", step_size=0.01, budget=0.08,
                            iterations=5, seed=1)
        cfg2 = AttackConfig(optimizer="pgd", step_size=0.01, budget=0.08,
                            iterations=5, seed=2)
        a = pgd(small_model, small_malware_std, cfg1)
        b = pgd(small_model, small_malware_std, cfg2)
        assert not np.array_equal(a.x_adv, b.x_adv)
        for res in (a, b):
            assert np.abs(res.x_adv - small_malware_std).max() <= 0.08 + 1e-12

    def test_same_seed_reproducible(self, small_model, small_malware_std):
        cfg = AttackConfig(optimizer="pgd", step_size=0.02, budget=0.1,
                           iterations=8, seed=9)
        a = pgd(small_model, small_malware_std, cfg)
        b = pgd(small_model, small_malware_std, cfg)
        np.testing.assert_array_equal(a.x_adv, b.x_adv)


class TestObjectiveWiring:
    def test_zero_alpha_mmd_equals_baseline(self, small_model, small_malware_std):
        base = AttackConfig(step_size=0.01, budget=0.05, iterations=10)
        mmd = AttackConfig(step_size=0.01, budget=0.05, iterations=10,
                           loss=LossSpec(kind="mmd", alpha=0.0, kernel="rbf"))
        a = ifgsm(small_model, small_malware_std, base)
        b = ifgsm(small_model, small_malware_std, mmd)
        np.testing.assert_array_equal(a.x_adv, b.x_adv)

    def test_regularized_attacks_run_each_kind(self, small_model, small_malware_std):
        for spec in (LossSpec(kind="kl", alpha=0.5),
                     LossSpec(kind="l2", alpha=0.5),
                     LossSpec(kind="mmd", alpha=0.5, kernel="linear"),
                     LossSpec(kind="mmd", alpha=0.5, kernel="rbf"),
                     LossSpec(kind="mmd", alpha=0.5, kernel="poly")):
            cfg = AttackConfig(step_size=0.01, budget=0.05, iterations=4, loss=spec)
            res = ifgsm(small_model, small_malware_std, cfg)
            assert np.isfinite(res.final_loss)
            assert np.abs(res.x_adv - small_malware_std).max() <= 0.05 + 1e-12

    def test_attack_loss_matches_single_batch(self, small_model, small_malware_std):
        X = small_malware_std[:8]
        rng = np.random.default_rng(0)
        Z = X + rng.normal(scale=0.02, size=X.shape)
        for spec in (LossSpec(kind="none"), LossSpec(kind="l2", alpha=1.0),
                     LossSpec(kind="mmd", alpha=1.0, kernel="linear")):
            whole = adv_loss(small_model, Z, X, spec)
            chunked = attack_loss(small_model, Z, X, spec, mmd_batch=256)
            assert chunked == pytest.approx(whole, rel=1e-12)

    def test_attack_loss_weights_mmd_chunks_by_size(self, small_model,
                                                    small_malware_std):
        X = small_malware_std[:7]
        rng = np.random.default_rng(1)
        Z = X + rng.normal(scale=0.02, size=X.shape)
        spec = LossSpec(kind="mmd", alpha=1.0, kernel="linear")
        got = attack_loss(small_model, Z, X, spec, mmd_batch=3)
        parts = [adv_loss(small_model, Z[s], X[s], spec)
                 for s in (slice(0, 3), slice(3, 6), slice(6, 7))]
        want = (3 * parts[0] + 3 * parts[1] + 1 * parts[2]) / 7
        assert got == pytest.approx(want, rel=1e-12)


class TestScoring:
    def test_success_rate(self, small_model, small_malware_std):
        rate = attack_success_rate(small_model, small_malware_std)
        preds = small_model.predict_proba_std(small_malware_std).argmax(axis=1)
        assert rate == pytest.approx((preds == 0).mean())

    def test_empty_input_errors(self, small_model):
        with pytest.raises(ValueError):
            attack_success_rate(small_model, np.zeros((0, 8)))

    def test_result_norms_consistent(self, small_model, small_malware_std):
        cfg = AttackConfig(step_size=0.01, budget=0.04, iterations=12)
        res = ifgsm(small_model, small_malware_std, cfg)
        diff = res.x_adv - small_malware_std
        assert res.linf_mean == pytest.approx(np.abs(diff).max(axis=1).mean())
        assert res.l2_mean == pytest.approx(np.linalg.norm(diff, axis=1).mean())
        assert res.asr == pytest.approx(res.success.mean())

    def test_run_attack_dispatches(self, small_model, small_malware_std):
        a = run_attack(small_model, small_malware_std,
                       AttackConfig(optimizer="ifgsm", iterations=2))
        b = run_attack(small_model, small_malware_std,
                       AttackConfig(optimizer="pgd", iterations=2, seed=4))
        direct = ifgsm(small_model, small_malware_std,
                       AttackConfig(optimizer="ifgsm", iterations=2))
        np.testing.assert_array_equal(a.x_adv, direct.x_adv)
        assert not np.array_equal(a.x_adv, b.x_adv)
