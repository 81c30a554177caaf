"""Socket client for remote noise predictors and the loopback echo server.

The client multiplexes by request_id over one connection guarded by a lock;
identical tensors cross the wire bit-exact. The echo server wraps the
in-process linear backend (lam = 1) and the toy codec, so a loopback run is
byte-identical to running the toy backend in process.
"""
from __future__ import annotations

import itertools
import socket
import socketserver
import threading

import numpy as np

from . import protocol
from .backend import DenoiseRequest, DenoiseResponse, LinearBackend, ToyCodec
from .errors import ProtocolError, RemoteError
from .latent import as_latent

DEFAULT_TIMEOUT = 300.0


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = sock.recv(remaining)
        except socket.timeout as exc:
            raise RemoteError(f"timed out waiting for {remaining} bytes") from exc
        except OSError as exc:
            raise RemoteError(f"connection error: {exc}") from exc
        if not chunk:
            raise RemoteError(f"connection closed mid-message ({remaining} bytes short)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise RemoteError(f"endpoint must be host:port, got {endpoint!r}")
    return host, int(port)


class RemoteSession:
    """One connection to a protocol server; thread-safe request/response."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        host, port = parse_endpoint(endpoint)
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise RemoteError(f"cannot connect to {endpoint}: {exc}") from exc
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        self.hello = self._handshake()

    def _handshake(self) -> protocol.HelloInfo:
        msg_type, payload = self._exchange_raw(protocol.encode_hello_request())
        if msg_type != protocol.MSG_HELLO:
            raise ProtocolError(f"expected hello response, got type {msg_type}")
        return protocol.decode_hello_response(payload)

    def _exchange_raw(self, frame: bytes) -> tuple[int, bytes]:
        with self._lock:
            try:
                self._sock.sendall(frame)
            except OSError as exc:
                raise RemoteError(f"send failed: {exc}") from exc
            return protocol.read_frame(lambda n: _recv_exact(self._sock, n))

    def _exchange(self, frame: bytes, expect_type: int, request_id: int) -> bytes:
        msg_type, payload = self._exchange_raw(frame)
        if msg_type == protocol.MSG_ERROR:
            err_id, message = protocol.decode_error(payload)
            raise RemoteError(f"server error: {message}", request_id=err_id)
        if msg_type != expect_type:
            raise ProtocolError(f"expected message type {expect_type}, got {msg_type}")
        return payload

    def next_request_id(self) -> int:
        return next(self._ids)

    def denoise(self, req: DenoiseRequest) -> DenoiseResponse:
        frame = protocol.pack_frame(protocol.MSG_DENOISE_REQ, protocol.encode_denoise_request(req))
        payload = self._exchange(frame, protocol.MSG_DENOISE_RESP, req.request_id)
        resp = protocol.decode_denoise_response(payload)
        if resp.request_id != req.request_id:
            raise ProtocolError(
                f"response id {resp.request_id} does not match request {req.request_id}"
            )
        return resp

    def decode_latent(self, z: np.ndarray) -> np.ndarray:
        rid = self.next_request_id()
        frame = protocol.pack_frame(
            protocol.MSG_DECODE_REQ, protocol.encode_tensor_message(rid, as_latent(z))
        )
        payload = self._exchange(frame, protocol.MSG_DECODE_RESP, rid)
        got, tensor = protocol.decode_tensor_message(payload)
        if got != rid:
            raise ProtocolError(f"response id {got} does not match request {rid}")
        return np.clip(np.rint(tensor), 0, 255).astype(np.uint8)

    def encode_image(self, img: np.ndarray) -> np.ndarray:
        rid = self.next_request_id()
        frame = protocol.pack_frame(
            protocol.MSG_ENCODE_REQ,
            protocol.encode_tensor_message(rid, np.asarray(img, dtype=np.float32)),
        )
        payload = self._exchange(frame, protocol.MSG_ENCODE_RESP, rid)
        got, tensor = protocol.decode_tensor_message(payload)
        if got != rid:
            raise ProtocolError(f"response id {got} does not match request {rid}")
        return as_latent(tensor)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class RemoteBackend:
    def __init__(self, session: RemoteSession):
        self.session = session

    def predict(self, req: DenoiseRequest) -> DenoiseResponse:
        return self.session.denoise(req)


class RemoteCodec:
    def __init__(self, session: RemoteSession):
        self.session = session
        self.spatial_factor = session.hello.spatial_factor

    def decode(self, z: np.ndarray) -> np.ndarray:
        return self.session.decode_latent(z)

    def encode(self, img: np.ndarray) -> np.ndarray:
        return self.session.encode_image(img)


class _EchoHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: EchoServer = self.server  # type: ignore[assignment]
        sock = self.request
        while True:
            try:
                msg_type, payload = protocol.read_frame(lambda n: _recv_exact(sock, n))
            except (RemoteError, ProtocolError):
                return  # peer went away or spoke garbage; drop the connection
            try:
                reply = server.dispatch(msg_type, payload)
            except Exception as exc:  # never drop the connection on a model error
                rid = _request_id_of(payload)
                reply = protocol.pack_frame(protocol.MSG_ERROR, protocol.encode_error(rid, str(exc)))
            try:
                sock.sendall(reply)
            except OSError:
                return


def _request_id_of(payload: bytes) -> int:
    if len(payload) >= 8:
        return int.from_bytes(payload[:8], "little")
    return 0


class EchoServer(socketserver.ThreadingTCPServer):
    """Loopback protocol server: denoise echoes the latent through the linear
    toy backend, decode/encode run the toy codec."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(
        self,
        address: tuple[str, int],
        seed: int = 0,
        lam: float = 1.0,
        spatial_factor: int = 8,
        latent_geometry: tuple[int, int, int] = (16, 16, 4),
        vocab_size: int = 1024,
        att_scale: int = 2,
    ):
        super().__init__(address, _EchoHandler)
        self.backend = LinearBackend(lam, seed=seed, att_scale=att_scale)
        self.codec = ToyCodec(spatial_factor)
        self.latent_geometry = latent_geometry
        self.vocab_size = vocab_size

    def dispatch(self, msg_type: int, payload: bytes) -> bytes:
        if msg_type == protocol.MSG_HELLO:
            h, w, c = self.latent_geometry
            info = protocol.HelloInfo(h, w, c, self.codec.spatial_factor, self.vocab_size)
            return protocol.encode_hello_response(info)
        if msg_type == protocol.MSG_DENOISE_REQ:
            req = protocol.decode_denoise_request(payload)
            resp = self.backend.predict(req.validated())
            return protocol.pack_frame(
                protocol.MSG_DENOISE_RESP, protocol.encode_denoise_response(resp)
            )
        if msg_type == protocol.MSG_DECODE_REQ:
            rid, latent = protocol.decode_tensor_message(payload)
            img = self.codec.decode(latent)
            return protocol.pack_frame(
                protocol.MSG_DECODE_RESP,
                protocol.encode_tensor_message(rid, img.astype(np.float32)),
            )
        if msg_type == protocol.MSG_ENCODE_REQ:
            rid, img_f32 = protocol.decode_tensor_message(payload)
            latent = self.codec.encode(np.clip(np.rint(img_f32), 0, 255).astype(np.uint8))
            return protocol.pack_frame(
                protocol.MSG_ENCODE_RESP, protocol.encode_tensor_message(rid, latent)
            )
        raise ProtocolError(f"unsupported message type {msg_type}")

    def serve_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
