import json

import numpy as np
import pytest

from src.autodiff import Tensor, functional as F, gradients
from src.entity.op_dictionary import apply_smooth, default_registry
from src.entity.policy import (Policy, Stage, deserialize, deterministic_policy, init_policy, load_policy,
                               relaxed_forward, save_policy, serialize, stylize, stylize_batch, summary,
                               to_document)
from src.exception import (MalformedDocumentError, PolicyValidationError, RegistryMismatchError,
                           ShapeMismatchError, VersionMismatchError)


def uniform_policy(K=4, registry=None):
    registry = registry or default_registry()
    N = registry.N
    stages = tuple(Stage(np.zeros(N, np.float32), np.full(N, 0.5, np.float32), np.zeros(N, np.float32))
                   for _ in range(K))
    return Policy(stages, registry)


def test_init_policy_is_seeded():
    a, b = init_policy(4, seed=3), init_policy(4, seed=3)
    for name in ("w", "mu01", "p_logit"):
        np.testing.assert_array_equal(a.arrays()[name], b.arrays()[name])
    assert a.K == 4 and a.N == 8
    assert np.abs(a.arrays()["w"]).max() <= 0.01
    assert not np.array_equal(a.arrays()["w"], init_policy(4, seed=4).arrays()["w"])


def test_policy_validation():
    with pytest.raises(PolicyValidationError):
        init_policy(0)
    with pytest.raises(PolicyValidationError):
        Policy(())
    bad = Stage(np.zeros(8, np.float32), np.full(8, 1.5, np.float32), np.zeros(8, np.float32))
    with pytest.raises(PolicyValidationError):
        Policy((bad,))
    with pytest.raises(PolicyValidationError):
        Policy((Stage(np.zeros(3), np.zeros(3), np.zeros(3)),))


def test_with_arrays_keeps_mu01_in_range():
    policy = init_policy(2)
    arrays = policy.arrays()
    updated = policy.with_arrays(arrays["w"], arrays["mu01"] + 2.0, arrays["p_logit"])
    assert updated.arrays()["mu01"].max() == 1.0


class TestRelaxedForward:
    def test_identity_branch_dominates(self, rng):
        x = rng.uniform(size=(3, 6, 6)).astype(np.float32)
        policy = deterministic_policy([("identity", None)], margin=20.0, p_logit=0.0)
        out = relaxed_forward(policy, x, np.random.default_rng(1)).numpy()
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_closed_gates_pass_input_through(self, rng):
        x = rng.uniform(size=(3, 6, 6)).astype(np.float32)
        policy = init_policy(3, seed=2)
        arrays = policy.arrays()
        closed = policy.with_arrays(rng.normal(size=arrays["w"].shape), arrays["mu01"],
                                    np.full(arrays["p_logit"].shape, -40.0))
        out = relaxed_forward(closed, x, np.random.default_rng(1)).numpy()
        np.testing.assert_allclose(out, x, atol=1e-6)

    def test_open_invert(self):
        x = np.full((3, 2, 2), 0.25, dtype=np.float32)
        out = relaxed_forward(deterministic_policy([("invert", None)]), x, np.random.default_rng(0)).numpy()
        np.testing.assert_allclose(out, 0.75, atol=1e-6)

    def test_saturated_policy_matches_composition(self, registry, rng):
        choices = [("grayscale", None), ("gamma", 0.7), ("brightness", 0.4), ("gaussian_blur", 0.3)]
        policy = deterministic_policy(choices)
        x = rng.uniform(size=(3, 8, 8)).astype(np.float32)
        expected = Tensor(x)
        for name, mu01 in choices:
            expected = apply_smooth(registry.index(name), expected, mu01)
        out = relaxed_forward(policy, x, np.random.default_rng(5)).numpy()
        np.testing.assert_allclose(out, expected.numpy(), atol=1e-5)

    def test_batches_draw_noise_per_image(self, rng):
        x = np.broadcast_to(rng.uniform(size=(3, 6, 6)), (4, 3, 6, 6)).astype(np.float32)
        out = relaxed_forward(init_policy(2, seed=1), x, np.random.default_rng(0)).numpy()
        assert out.shape == (4, 3, 6, 6)
        assert not np.allclose(out[0], out[1])

    def test_gradients_reach_every_parameter(self, rng):
        policy = init_policy(2, seed=1)
        leaves = policy.leaves()
        x = rng.uniform(0.2, 0.8, size=(2, 3, 6, 6)).astype(np.float32)
        loss = F.mean(relaxed_forward(policy, x, np.random.default_rng(0), leaves))
        grads = gradients(loss, wrt=list(leaves)).of(leaves.named())
        for name, grad in grads.items():
            assert grad.shape == (2, 8)
            assert np.all(np.isfinite(grad)) and np.any(grad != 0), name

    def test_rejects_bad_shape(self):
        with pytest.raises(ShapeMismatchError):
            relaxed_forward(init_policy(1), np.zeros((4, 4), np.float32), np.random.default_rng(0))


class TestStylize:
    def test_identity_is_exact(self, rng):
        x = rng.uniform(size=(3, 5, 5)).astype(np.float32)
        policy = deterministic_policy([("identity", None)] * 3)
        np.testing.assert_array_equal(stylize(policy, x, np.random.default_rng(0)), x)

    def test_invert(self):
        x = np.full((3, 2, 2), 0.25, dtype=np.float32)
        out = stylize(deterministic_policy([("invert", None)]), x, np.random.default_rng(0))
        np.testing.assert_array_equal(out, np.full((3, 2, 2), 0.75, dtype=np.float32))

    def test_grayscale_then_invert(self):
        x = np.array([0.2, 0.4, 0.6], dtype=np.float32).reshape(3, 1, 1)
        policy = deterministic_policy([("grayscale", None), ("invert", None)])
        out = stylize(policy, x, np.random.default_rng(0))
        np.testing.assert_array_equal(out, np.full((3, 1, 1), np.float32(0.6)))

    def test_closed_gate_skips_stage(self, rng):
        x = rng.uniform(size=(3, 4, 4)).astype(np.float32)
        policy = deterministic_policy([("invert", None)], p_logit=-40.0)
        np.testing.assert_array_equal(stylize(policy, x, np.random.default_rng(0)), x)

    def test_sampling_follows_selection_probabilities(self):
        registry = default_registry()
        w = np.full(8, -40.0, np.float32)
        w[registry.index("identity")] = 0.0
        w[registry.index("invert")] = 0.0
        policy = Policy((Stage(w, np.full(8, 0.5, np.float32), np.full(8, 40.0, np.float32)),), registry)
        x = np.full((3, 1, 1), 0.25, dtype=np.float32)
        rng = np.random.default_rng(0)
        inverted = sum(stylize(policy, x, rng)[0, 0, 0] == np.float32(0.75) for _ in range(2000))
        assert 850 < inverted < 1150

    def test_batch_is_order_preserving_and_thread_safe(self, rng):
        images = [rng.uniform(size=(3, 6, 6)).astype(np.float32) for _ in range(12)]
        seeds = list(range(100, 112))
        policy = init_policy(3, seed=9)
        serial = stylize_batch(policy, images, seeds, workers=1)
        parallel = stylize_batch(policy, images, seeds, workers=4)
        np.testing.assert_array_equal(serial, parallel)
        np.testing.assert_array_equal(serial[5], stylize(policy, images[5], np.random.default_rng(105)))

    def test_seed_count_must_match(self, rng):
        with pytest.raises(ShapeMismatchError):
            stylize_batch(init_policy(1), [np.zeros((3, 2, 2), np.float32)], [1, 2])


class TestSummary:
    def test_uniform_policy(self):
        result = summary(uniform_policy())
        np.testing.assert_allclose(result.expected_count, 0.5, atol=1e-5)
        assert result.names == default_registry().names

    def test_one_hot_stages(self, registry):
        policy = deterministic_policy([("invert", None), ("invert", None), ("gamma", 0.75)])
        result = summary(policy)
        expected = np.zeros(8)
        expected[registry.index("invert")] = 2
        expected[registry.index("gamma")] = 1
        np.testing.assert_allclose(result.expected_count, expected, atol=1e-6)
        assert result.expected_param[registry.index("gamma")] == pytest.approx(0.75, abs=1e-6)
        assert result.expected_param[registry.index("invert")] == 0.0

    def test_no_param_ops_report_zero(self, registry):
        result = summary(init_policy(4, seed=0))
        for op in registry:
            if not op.has_param:
                assert result.expected_param[op.op_id] == 0.0

    def test_to_dict_uses_op_names(self):
        document = summary(uniform_policy()).to_dict()
        assert list(document["expected_count"]) == list(default_registry().names)

    def test_is_the_sum_of_single_stage_summaries(self):
        arrays = init_policy(4, seed=11).arrays()
        rng = np.random.default_rng(12)
        policy = init_policy(4).with_arrays(rng.normal(size=arrays["w"].shape),
                                            rng.uniform(size=arrays["mu01"].shape),
                                            rng.normal(size=arrays["p_logit"].shape))
        whole = summary(policy)
        parts = [summary(policy.sub_policy(k)) for k in range(policy.K)]
        assert all(policy.sub_policy(k).K == 1 for k in range(policy.K))
        np.testing.assert_allclose(whole.expected_count, sum(p.expected_count for p in parts), atol=1e-6)
        np.testing.assert_allclose(whole.expected_param, sum(p.expected_param for p in parts), atol=1e-6)


class TestSerialization:
    def test_round_trip_is_byte_identical(self):
        policy = init_policy(3, seed=4).with_temperatures(0.37, 0.81)
        data = serialize(policy)
        assert serialize(deserialize(data)) == data
        assert json.loads(data)["version"] == 1

    def test_document_fields(self):
        document = to_document(init_policy(2))
        assert sorted(document) == ["registry", "stages", "tau_gate", "tau_select", "version"]
        assert sorted(document["stages"][0]) == ["mu01", "p_logit", "w"]

    def test_tampered_registry(self):
        document = to_document(init_policy(2))
        document["registry"][0], document["registry"][1] = document["registry"][1], document["registry"][0]
        with pytest.raises(RegistryMismatchError):
            deserialize(json.dumps(document).encode())

    def test_empty_stages(self):
        document = to_document(init_policy(2))
        document["stages"] = []
        with pytest.raises(PolicyValidationError):
            deserialize(json.dumps(document).encode())

    def test_wrong_version(self):
        document = to_document(init_policy(1))
        document["version"] = 2
        with pytest.raises(VersionMismatchError):
            deserialize(json.dumps(document).encode())

    @pytest.mark.parametrize("version", [True, "1", 1.0])
    def test_version_must_be_an_integer(self, version):
        document = to_document(init_policy(1))
        document["version"] = version
        with pytest.raises(MalformedDocumentError):
            deserialize(json.dumps(document).encode())

    @pytest.mark.parametrize("data", [b"not json", b"[]", b'{"version": 1}', b"\xff\xfe"])
    def test_malformed(self, data):
        with pytest.raises(MalformedDocumentError):
            deserialize(data)

    def test_file_round_trip(self, tmp_path):
        policy = init_policy(2, seed=8)
        path = str(tmp_path / "policy.json")
        save_policy(policy, path)
        assert serialize(load_policy(path)) == serialize(policy)
