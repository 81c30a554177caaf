import numpy as np
import pytest

from hirex.backend import (
    DenoiseRequest,
    EdgeBiasedBackend,
    LinearBackend,
    OracleBackend,
    ZeroBackend,
    make_toy_backend,
    predict_noise,
    synthetic_attention,
    toy_codec,
)
from hirex.errors import BackendError, ShapeError, ValidationError
from hirex.schedule import ddim_step, forward_diffuse, inference_timesteps, make_schedule


def req_for(z, t=10, tokens=(1, 2), **kw):
    return DenoiseRequest(latent=z, timestep=t, prompt_tokens=tokens, **kw)


class TestToyBackends:
    def test_zero(self, rng):
        z = rng.standard_normal((4, 4, 2)).astype(np.float32)
        resp = predict_noise(ZeroBackend(), req_for(z))
        assert np.array_equal(resp.eps_pred, np.zeros_like(z))

    def test_linear_scaling(self):
        z = np.array([[[2.0], [4.0]]], dtype=np.float32)
        resp = predict_noise(LinearBackend(0.5), req_for(z))
        assert resp.eps_pred[:, :, 0].tolist() == [[1.0, 2.0]]

    def test_linear_lam_zero_equals_zero_backend(self, rng):
        z = rng.standard_normal((3, 3, 1)).astype(np.float32)
        a = predict_noise(LinearBackend(0.0), req_for(z)).eps_pred
        b = predict_noise(ZeroBackend(), req_for(z)).eps_pred
        assert np.array_equal(a, b)

    def test_oracle_ten_step_reconstruction(self, rng):
        sched = make_schedule(1000, 0.00085, 0.012)
        z0 = rng.standard_normal((8, 8, 4)).astype(np.float32)
        eps = rng.standard_normal((8, 8, 4)).astype(np.float32)
        backend = OracleBackend(z0, eps)
        ts = inference_timesteps(sched, 10)
        z = forward_diffuse(z0, sched.steps, eps, sched)
        for t, t_prev in zip(ts, ts[1:]):
            resp = predict_noise(backend, req_for(z, t=t))
            z = ddim_step(z, resp.eps_pred, t, t_prev, sched)
        assert float(np.abs(z - z0).max()) < 1e-4

    def test_oracle_shape_guard(self, rng):
        backend = OracleBackend(
            rng.standard_normal((4, 4, 1)).astype(np.float32),
            rng.standard_normal((4, 4, 1)).astype(np.float32),
        )
        with pytest.raises((ShapeError, BackendError)):
            predict_noise(backend, req_for(np.zeros((3, 3, 1), np.float32)))

    def test_edge_biased_zero_bias_is_linear(self, rng):
        z = rng.standard_normal((4, 4, 2)).astype(np.float32)
        cond = ((rng.random((8, 8, 1)) > 0.5) * 255).astype(np.uint8)
        a = predict_noise(EdgeBiasedBackend(0.7, 0.0), req_for(z, condition=cond)).eps_pred
        b = predict_noise(LinearBackend(0.7), req_for(z)).eps_pred
        assert np.array_equal(a, b)

    def test_edge_biased_conditioning_observable(self, rng):
        z = rng.standard_normal((4, 4, 2)).astype(np.float32)
        cond = np.zeros((8, 8, 1), np.uint8)
        cond[:4, :4] = 255  # top-left latent quadrant
        backend = EdgeBiasedBackend(0.5, bias=2.0)
        with_cond = predict_noise(backend, req_for(z, condition=cond)).eps_pred
        without = predict_noise(backend, req_for(z)).eps_pred
        delta = without - with_cond
        assert np.allclose(delta[:2, :2], 2.0, atol=1e-6)
        assert np.allclose(delta[2:, 2:], 0.0, atol=1e-6)

    def test_factory_kinds_and_errors(self):
        assert isinstance(make_toy_backend("zero"), ZeroBackend)
        assert isinstance(make_toy_backend("linear", lam=0.5), LinearBackend)
        with pytest.raises(ValidationError):
            make_toy_backend("linear")  # lam missing
        with pytest.raises(ValidationError):
            make_toy_backend("warp")
        with pytest.raises(ValidationError):
            make_toy_backend("zero", extra=1)

    def test_referential_transparency(self, rng):
        z = rng.standard_normal((4, 4, 2)).astype(np.float32)
        backend = LinearBackend(0.3, seed=9)
        r1 = predict_noise(backend, req_for(z, capture_attention=True))
        r2 = predict_noise(backend, req_for(z, capture_attention=True))
        assert np.array_equal(r1.eps_pred, r2.eps_pred)
        assert np.array_equal(r1.attention.values, r2.attention.values)

    def test_attention_only_when_flagged(self, rng):
        z = rng.standard_normal((4, 4, 1)).astype(np.float32)
        backend = LinearBackend(0.5)
        assert predict_noise(backend, req_for(z)).attention is None
        att = predict_noise(backend, req_for(z, capture_attention=True)).attention
        assert att is not None
        assert (att.map_h, att.map_w) == (2, 2)
        assert att.tokens == 2

    def test_shape_contract_enforced(self, rng):
        class Misbehaving:
            def predict(self, req):
                from hirex.backend import DenoiseResponse

                return DenoiseResponse(eps_pred=np.zeros((1, 1, 1), np.float32))

        with pytest.raises(ShapeError):
            predict_noise(Misbehaving(), req_for(np.zeros((2, 2, 1), np.float32)))

    def test_request_validation(self):
        z = np.zeros((2, 2, 1), np.float32)
        with pytest.raises(ValidationError):
            predict_noise(ZeroBackend(), req_for(z, t=0))
        with pytest.raises(ValidationError):
            predict_noise(ZeroBackend(), req_for(z, tokens=(-1,)))


class TestSyntheticAttention:
    def test_nonnegative_and_shaped(self):
        att = synthetic_attention(0, 5, 6, 7, 4, 2)
        assert att.values.shape == (42, 4)
        assert np.all(att.values >= 0)

    def test_deterministic(self):
        a = synthetic_attention(3, 2, 4, 4, 2, 2)
        b = synthetic_attention(3, 2, 4, 4, 2, 2)
        assert np.array_equal(a.values, b.values)


class TestToyCodec:
    def test_midpoint_and_endpoint(self):
        codec = toy_codec(1)
        z = np.array([[[0.0]]], dtype=np.float32)
        assert int(codec.decode(z)[0, 0, 0]) in (127, 128)
        assert int(codec.decode(np.array([[[1.0]]], np.float32))[0, 0, 0]) == 255
        # round trip at factor 1 within one quantization step
        back = codec.encode(codec.decode(z))
        assert abs(float(back[0, 0, 0])) <= 0.008

    def test_decode_geometry(self, rng):
        codec = toy_codec(4)
        z = rng.standard_normal((3, 5, 2)).astype(np.float32)
        img = codec.decode(z)
        assert img.shape == (12, 20, 2)
        assert img.dtype == np.uint8

    def test_roundtrip_quantization_bound(self, rng):
        codec = toy_codec(8)
        z = rng.uniform(-1, 1, size=(6, 6, 4)).astype(np.float32)
        back = codec.encode(codec.decode(z))
        assert float(np.abs(back - z).max()) <= 1.0 / 127.5

    def test_roundtrip_clamps_out_of_range(self):
        codec = toy_codec(2)
        z = np.array([[[1.7], [-2.0]]], dtype=np.float32)
        back = codec.encode(codec.decode(z))
        assert back[0, 0, 0] == pytest.approx(1.0, abs=1 / 127.5)
        assert back[0, 1, 0] == pytest.approx(-1.0, abs=1 / 127.5)

    def test_factory_validation(self):
        with pytest.raises(ValidationError):
            toy_codec(0)
