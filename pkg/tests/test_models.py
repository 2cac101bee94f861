import dataclasses

import numpy as np
import pytest

from renops import graphs
from renops.autodiff import Tensor, reset_tape
from renops.message_passing import graph_edges
from renops.models import (ModelConfig, ModelError, build_model,
                           equalize_width, load_checkpoint, save_checkpoint,
                           transplant_forecast)

NEURAL_VARIANTS = ("DON", "DON-MP", "NOMAD-MP", "DON-PI", "DON-MP-PI",
                   "NOMAD-MP-PI", "ROMA")


def tiny_cfg(variant, dynamics="none", levels=()):
    return ModelConfig(variant=variant, d_in=6, n_feat=8, m_hist=8,
                       q_lift=2, width=16, heads=2, n_blocks=1, d_field=3,
                       p_basis=4, m_fourier=4, trunk_width=16, trunk_depth=1,
                       n_batch=30, level_sizes=levels, dynamics=dynamics)


@pytest.fixture(scope="module")
def inputs():
    g = graphs.generate_powerlaw_cluster(30, 2, 1.0, seed=0)
    ed, es = graph_edges(g)
    rng = np.random.default_rng(1)
    return {
        "graph": g,
        "feats": rng.normal(size=(30, 6)) * 0.1,
        "a0": g.to_scipy().toarray().astype(np.float64),
        "u": rng.random((30, 8)),
        "edges": (ed, es),
    }


def run_forecast(model, inputs, t=0.4, capture=False):
    ed, es = inputs["edges"]
    cond = model.condition(Tensor(inputs["feats"]), Tensor(inputs["a0"]),
                           Tensor(inputs["u"]), ed, es,
                           capture_attention=capture)
    return cond, model.forecast(cond, t)


class TestConfig:
    def test_unknown_variant(self):
        with pytest.raises(ModelError, match="variant"):
            ModelConfig(variant="DONUT")

    def test_pi_needs_dynamics(self):
        with pytest.raises(ModelError, match="effective-dynamics"):
            tiny_cfg("DON-MP-PI", dynamics="none")

    def test_plain_variant_rejects_dynamics(self):
        with pytest.raises(ModelError, match="dynamics"):
            tiny_cfg("DON-MP", dynamics="blackbox")

    def test_levels_are_roma_only(self):
        with pytest.raises(ModelError, match="ROMA"):
            tiny_cfg("DON-MP", levels=(8,))

    def test_width_heads_divisibility(self):
        with pytest.raises(ModelError, match="divisible"):
            ModelConfig(variant="DON-MP", width=30, heads=4)

    def test_gp_not_a_neural_model(self):
        with pytest.raises(ModelError, match="gp"):
            build_model(ModelConfig(variant="GP"))

    def test_dict_round_trip(self):
        cfg = tiny_cfg("ROMA", "graybox", (8, 4))
        again = ModelConfig.from_dict(cfg.to_dict())
        assert again == cfg
        assert isinstance(again.level_sizes, tuple)


class TestForward:
    @pytest.mark.parametrize("variant,dyn,levels", [
        ("DON", "none", ()),
        ("DON-PI", "blackbox", ()),
        ("DON-MP", "none", ()),
        ("DON-MP-PI", "blackbox", ()),
        ("NOMAD-MP", "none", ()),
        ("NOMAD-MP-PI", "graybox", ()),
        ("ROMA", "blackbox", (8,)),
        ("ROMA", "graybox", (8, 4)),
    ])
    def test_variant_forward(self, inputs, variant, dyn, levels):
        reset_tape()
        model = build_model(tiny_cfg(variant, dyn, levels), seed=2)
        cond, u_hat = run_forecast(model, inputs)
        assert u_hat.shape == (30 + sum(levels),)
        assert np.all(u_hat.data >= 0.0)  # norm projection
        assert np.all(np.isfinite(u_hat.data))

    def test_attention_only_for_transformer_variants(self, inputs):
        reset_tape()
        plain = build_model(tiny_cfg("DON"), seed=0)
        cond, _ = run_forecast(plain, inputs, capture=True)
        assert cond.attention is None
        mp = build_model(tiny_cfg("DON-MP"), seed=0)
        cond, _ = run_forecast(mp, inputs, capture=True)
        assert len(cond.attention) == 1
        for a in cond.attention:
            np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-8)

    def test_same_seed_same_parameters(self):
        a = build_model(tiny_cfg("ROMA", "blackbox", (8,)), seed=5)
        b = build_model(tiny_cfg("ROMA", "blackbox", (8,)), seed=5)
        for (ka, pa), (kb, pb) in zip(a.named_parameters(),
                                      b.named_parameters()):
            assert ka == kb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_dynamics_residual_requires_dynamics(self, inputs):
        reset_tape()
        model = build_model(tiny_cfg("DON-MP"), seed=0)
        cond, _ = run_forecast(model, inputs)
        with pytest.raises(ModelError, match="dynamics"):
            model.dynamics_residual(cond, 0.4)

    def test_residual_fn_matches_bundle_at_base_point(self, inputs):
        reset_tape()
        model = build_model(tiny_cfg("ROMA", "graybox", (8,)), seed=3)
        cond, _ = run_forecast(model, inputs)
        field, g_d = model.dynamics_residual(cond, 0.4)
        f = model.residual_fn(cond)(model.coordinates(0.4))
        np.testing.assert_allclose(f.data, field.dt.data - g_d.data,
                                   atol=1e-12)


class TestFrozenArtifacts:
    def test_frozen_parts_depend_on_frozen_seed_only(self):
        a = build_model(tiny_cfg("DON-MP"), seed=0)
        b = build_model(tiny_cfg("DON-MP"), seed=99)
        np.testing.assert_array_equal(a.ff.b.data, b.ff.b.data)
        np.testing.assert_array_equal(a.lift.table, b.lift.table)
        other = build_model(
            dataclasses.replace(tiny_cfg("DON-MP"), frozen_seed=7), seed=0)
        assert not np.array_equal(a.ff.b.data, other.ff.b.data)

    def test_shared_fourier_matrix_across_heads(self, inputs):
        model = build_model(tiny_cfg("ROMA", "graybox", (8,)), seed=0)
        assert model.trunk.ff is model.ff
        assert model.dynamics.trunk_f.ff is model.ff


class TestTransplant:
    def test_pi_variant_computes_same_forecast_class(self, inputs):
        # identical forecasts once the shared weights agree: the dynamics
        # operator must not touch the forecast path
        reset_tape()
        pi = build_model(tiny_cfg("DON-MP-PI", "blackbox"), seed=11)
        plain = build_model(tiny_cfg("DON-MP"), seed=12)
        transplant_forecast(pi, plain)
        _, u_pi = run_forecast(pi, inputs)
        _, u_plain = run_forecast(plain, inputs)
        np.testing.assert_array_equal(u_pi.data, u_plain.data)

    def test_don_pi_matches_don(self, inputs):
        reset_tape()
        pi = build_model(tiny_cfg("DON-PI", "blackbox"), seed=4)
        plain = build_model(tiny_cfg("DON"), seed=5)
        transplant_forecast(pi, plain)
        _, u_pi = run_forecast(pi, inputs)
        _, u_plain = run_forecast(plain, inputs)
        np.testing.assert_array_equal(u_pi.data, u_plain.data)

    def test_transplant_rejects_missing_parameters(self):
        plain = build_model(tiny_cfg("DON-MP"), seed=0)
        pi = build_model(tiny_cfg("DON-MP-PI", "blackbox"), seed=0)
        with pytest.raises(ModelError, match="unknown parameters"):
            transplant_forecast(plain, pi)


class TestCheckpoint:
    def test_round_trip_is_bitwise(self, tmp_path, inputs):
        reset_tape()
        model = build_model(tiny_cfg("ROMA", "blackbox", (8,)), seed=7)
        _, before = run_forecast(model, inputs)
        path = str(tmp_path / "ckpt.bin")
        save_checkpoint(path, model, {"step": 123})
        again, meta = load_checkpoint(path)
        assert meta["step"] == 123
        assert again.cfg == model.cfg
        reset_tape()
        _, after = run_forecast(again, inputs)
        np.testing.assert_array_equal(before.data, after.data)


class TestEqualize:
    def test_baseline_width_matches_target(self):
        roma = build_model(tiny_cfg("ROMA", "blackbox", (8,)), seed=0)
        target = roma.n_params()
        cfg, count = equalize_width(tiny_cfg("DON-MP"), target)
        base = build_model(tiny_cfg("DON-MP"), seed=0).n_params()
        assert abs(count - target) < abs(base - target)
        assert cfg.width % cfg.heads == 0
        assert build_model(cfg, seed=0).n_params() == count

    def test_count_grows_with_width(self):
        cfg = tiny_cfg("DON-MP")
        small = build_model(dataclasses.replace(cfg, width=8, trunk_width=8),
                            seed=0).n_params()
        big = build_model(dataclasses.replace(cfg, width=32, trunk_width=32),
                          seed=0).n_params()
        assert big > small

    def test_bad_target(self):
        with pytest.raises(ModelError, match="positive"):
            equalize_width(tiny_cfg("DON-MP"), 0)
