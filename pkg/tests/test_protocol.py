import struct
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hirex import protocol
from hirex.backend import DenoiseRequest, DenoiseResponse, LinearBackend
from hirex.errors import ProtocolError, RemoteError
from hirex.prompts import CrossAttentionMap
from hirex.remote import EchoServer, RemoteBackend, RemoteCodec, RemoteSession


def random_latent(rng, max_side=6, channels=None):
    h = int(rng.integers(1, max_side))
    w = int(rng.integers(1, max_side))
    c = channels or int(rng.integers(1, 5))
    return rng.standard_normal((h, w, c)).astype(np.float32)


def random_request(rng, rid):
    condition = None
    if rng.random() < 0.5:
        side = int(rng.integers(1, 5)) * 2
        condition = ((rng.random((side, side, 1)) > 0.5) * 255).astype(np.uint8)
    tokens = tuple(int(t) for t in rng.integers(0, 500, size=int(rng.integers(0, 6))))
    return DenoiseRequest(
        latent=random_latent(rng),
        timestep=int(rng.integers(1, 1000)),
        prompt_tokens=tokens,
        guidance_scale=float(np.float32(rng.uniform(0, 12))),
        condition=condition,
        capture_attention=bool(rng.random() < 0.3),
        request_id=rid,
    )


def random_response(rng, rid):
    attention = None
    if rng.random() < 0.5:
        h = int(rng.integers(1, 5))
        w = int(rng.integers(1, 5))
        m = int(rng.integers(1, 6))
        attention = CrossAttentionMap(
            values=rng.random((h * w, m)).astype(np.float32).astype(np.float64),
            map_h=h,
            map_w=w,
            scale=int(rng.integers(1, 5)),
        )
    return DenoiseResponse(eps_pred=random_latent(rng), request_id=rid, attention=attention)


def assert_request_equal(a: DenoiseRequest, b: DenoiseRequest):
    assert np.array_equal(a.latent, b.latent)
    assert a.timestep == b.timestep
    assert a.prompt_tokens == b.prompt_tokens
    assert np.float32(a.guidance_scale) == np.float32(b.guidance_scale)
    assert a.capture_attention == b.capture_attention
    assert a.request_id == b.request_id
    if a.condition is None:
        assert b.condition is None
    else:
        assert np.array_equal(a.condition, b.condition)


class TestFrames:
    def test_header_layout(self):
        frame = protocol.pack_frame(protocol.MSG_HELLO, b"xy")
        assert frame[:4] == b"ADP2"
        version, msg_type, length = struct.unpack("<HHI", frame[4:12])
        assert (version, msg_type, length) == (protocol.VERSION, 1, 2)
        assert frame[12:] == b"xy"

    def test_bad_magic_rejected(self):
        with pytest.raises(ProtocolError):
            protocol.parse_header(b"NOPE" + b"\x00" * 8)

    def test_version_mismatch_rejected(self):
        frame = protocol.pack_frame(protocol.MSG_HELLO, b"", version=9)
        with pytest.raises(ProtocolError, match="version"):
            protocol.parse_header(frame[:12])

    def test_minimal_denoise_request_length(self):
        # request_id u64 + timestep u32 + guidance f32 + token-count u32
        # + 0 tokens + flags u8 + latent LTNS (magic 4 + dims 12 + 4 floats 16)
        req = DenoiseRequest(
            latent=np.zeros((2, 2, 1), np.float32), timestep=1, prompt_tokens=()
        )
        payload = protocol.encode_denoise_request(req)
        assert len(payload) == 8 + 4 + 4 + 4 + 1 + (4 + 12 + 16) == 53
        frame = protocol.pack_frame(protocol.MSG_DENOISE_REQ, payload)
        assert len(frame) == protocol.HEADER_LEN + 53 == 65

    def test_trailing_bytes_rejected(self):
        req = DenoiseRequest(
            latent=np.zeros((2, 2, 1), np.float32), timestep=1, prompt_tokens=()
        )
        payload = protocol.encode_denoise_request(req) + b"\x00"
        with pytest.raises(ProtocolError):
            protocol.decode_denoise_request(payload)

    def test_hello_roundtrip(self):
        info = protocol.HelloInfo(16, 24, 4, 8, 4096)
        frame = protocol.encode_hello_response(info)
        msg_type, length = protocol.parse_header(frame[:12])
        assert msg_type == protocol.MSG_HELLO
        assert protocol.decode_hello_response(frame[12:]) == info

    def test_error_roundtrip(self):
        payload = protocol.encode_error(77, "boom: bad geometry")
        rid, message = protocol.decode_error(payload)
        assert (rid, message) == (77, "boom: bad geometry")


class TestRoundTrips:
    def test_thousand_randomized_messages(self, rng):
        for i in range(500):
            req = random_request(rng, i)
            back = protocol.decode_denoise_request(protocol.encode_denoise_request(req))
            assert_request_equal(req, back)
        for i in range(500):
            resp = random_response(rng, i)
            back = protocol.decode_denoise_response(protocol.encode_denoise_response(resp))
            assert np.array_equal(back.eps_pred, resp.eps_pred)
            assert back.request_id == resp.request_id
            if resp.attention is None:
                assert back.attention is None
            else:
                assert np.array_equal(back.attention.values, resp.attention.values)
                assert back.attention.scale == resp.attention.scale

    @given(seed=st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_request_identity_property(self, seed):
        rng = np.random.default_rng(seed)
        req = random_request(rng, int(rng.integers(0, 2**63)))
        back = protocol.decode_denoise_request(protocol.encode_denoise_request(req))
        assert_request_equal(req, back)

    def test_tensor_message_roundtrip(self, rng):
        z = random_latent(rng)
        rid, back = protocol.decode_tensor_message(protocol.encode_tensor_message(9, z))
        assert rid == 9
        assert np.array_equal(back, z)


@pytest.fixture
def echo_server():
    server = EchoServer(("127.0.0.1", 0), seed=5, lam=1.0, spatial_factor=4)
    server.serve_background()
    host, port = server.server_address
    yield f"{host}:{port}", server
    server.shutdown()
    server.server_close()


class TestLoopback:
    def test_handshake(self, echo_server):
        endpoint, server = echo_server
        session = RemoteSession(endpoint, timeout=5)
        assert session.hello.spatial_factor == 4
        assert session.hello.latent_h == 16
        session.close()

    def test_echo_denoise_bit_exact(self, echo_server, rng):
        endpoint, _ = echo_server
        session = RemoteSession(endpoint, timeout=5)
        backend = RemoteBackend(session)
        z = rng.standard_normal((4, 6, 3)).astype(np.float32)
        req = DenoiseRequest(latent=z, timestep=3, prompt_tokens=(1,), request_id=11)
        resp = backend.predict(req)
        assert np.array_equal(resp.eps_pred, z)  # lam = 1 echo
        assert resp.request_id == 11
        session.close()

    def test_remote_matches_in_process_backend(self, echo_server, rng):
        endpoint, _ = echo_server
        session = RemoteSession(endpoint, timeout=5)
        remote = RemoteBackend(session)
        local = LinearBackend(1.0, seed=5, att_scale=2)
        z = rng.standard_normal((8, 8, 2)).astype(np.float32)
        req = DenoiseRequest(
            latent=z, timestep=7, prompt_tokens=(3, 4), capture_attention=True, request_id=2
        )
        a = remote.predict(req)
        b = local.predict(req.validated())
        assert np.array_equal(a.eps_pred, b.eps_pred)
        assert np.array_equal(
            a.attention.values.astype(np.float32), b.attention.values.astype(np.float32)
        )
        session.close()

    def test_remote_codec_roundtrip(self, echo_server, rng):
        endpoint, _ = echo_server
        session = RemoteSession(endpoint, timeout=5)
        codec = RemoteCodec(session)
        z = rng.uniform(-1, 1, (4, 4, 3)).astype(np.float32)
        img = codec.decode(z)
        assert img.shape == (16, 16, 3)
        back = codec.encode(img)
        assert float(np.abs(back - z).max()) <= 1.0 / 127.5
        session.close()

    def test_server_reports_errors_with_request_id(self, echo_server):
        endpoint, _ = echo_server
        session = RemoteSession(endpoint, timeout=5)
        bad = DenoiseRequest(
            latent=np.zeros((2, 2, 1), np.float32), timestep=0, prompt_tokens=(), request_id=99
        )
        with pytest.raises(RemoteError) as err:
            session.denoise(bad)
        assert err.value.request_id == 99
        session.close()

    def test_mid_message_close_surfaces_error(self):
        import socket

        listener = socket.socket()
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        host, port = listener.getsockname()

        def half_hello(sock):
            conn, _ = sock.accept()
            conn.recv(64)
            frame = protocol.encode_hello_response(protocol.HelloInfo(1, 1, 1, 1, 1))
            conn.sendall(frame[:7])  # truncate mid-header
            conn.close()

        thread = threading.Thread(target=half_hello, args=(listener,), daemon=True)
        thread.start()
        with pytest.raises(RemoteError, match="closed mid-message"):
            RemoteSession(f"{host}:{port}", timeout=5)
        listener.close()

    def test_connection_refused(self):
        with pytest.raises(RemoteError, match="cannot connect"):
            RemoteSession("127.0.0.1:1", timeout=1)
