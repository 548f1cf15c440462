from driftshade.harness import model_cache_key, normalize_config
from driftshade.repro import (
    DESK_DATA,
    OPERATING_POINT,
    rq1_config,
    rq2_config,
    rq3_sweeps,
)


class TestBundledConfigs:
    def test_rq1_has_six_objectives(self):
        cfg = normalize_config(rq1_config(0))
        ids = [a["id"] for a in cfg["attacks"]]
        assert ids == ["baseline", "kl", "l2", "mmd-linear", "mmd-rbf",
                       "mmd-poly"]
        for attack in cfg["attacks"]:
            assert attack["step_size"] == OPERATING_POINT["step_size"]
            assert attack["budget"] == OPERATING_POINT["budget"]
            assert attack["iterations"] == OPERATING_POINT["iterations"]
        kinds = {a["id"]: a["objective"] for a in cfg["attacks"]}
        assert kinds["baseline"] == "none" and kinds["mmd-rbf"] == "mmd"
        assert cfg["attacks"][0]["alpha"] == 0.0
        assert all(a["alpha"] > 0 for a in cfg["attacks"][1:])

    def test_rq2_doubles_with_pgd(self):
        cfg = normalize_config(rq2_config(0))
        assert len(cfg["attacks"]) == 12
        optimizers = [a["optimizer"] for a in cfg["attacks"]]
        assert optimizers[:6] == ["ifgsm"] * 6
        assert optimizers[6:] == ["pgd"] * 6
        ids = [a["id"] for a in cfg["attacks"]]
        assert len(set(ids)) == 12 and "pgd-baseline" in ids

    def test_rq3_sweeps_valid_and_ascending(self):
        sweeps = rq3_sweeps(0)
        names = [name for name, _, _ in sweeps]
        assert names == ["delta", "epsilon", "iterations"]
        for _, cfg, spec in sweeps:
            normalize_config(cfg)  # must validate
            assert list(spec.values) == sorted(spec.values)
            assert spec.base["objective"] == "none"
        by_name = {name: spec for name, _, spec in sweeps}
        assert by_name["delta"].values == (0.005, 0.01, 0.02, 0.05, 0.1)
        assert by_name["epsilon"].values[-1] == 0.1
        assert by_name["iterations"].values == (10, 50, 100, 200)

    def test_data_seed_pinned_across_global_seeds(self):
        a = normalize_config(rq1_config(0))
        b = normalize_config(rq1_config(9))
        assert a["data"]["seed"] == b["data"]["seed"] == DESK_DATA["seed"]
        assert a["split"]["seed"] != b["split"]["seed"]

    def test_rq1_rq2_share_model_cache_key(self):
        a = normalize_config(rq1_config(0))
        b = normalize_config(rq2_config(0))
        assert model_cache_key(a) == model_cache_key(b)

    def test_desk_scale_pins(self):
        assert DESK_DATA["n_features"] == 64
        assert DESK_DATA["n_per_class"] == 2000
        cfg = normalize_config(rq1_config(0))
        assert cfg["train"]["hidden1"] == 256
        assert cfg["train"]["hidden2"] == 128
