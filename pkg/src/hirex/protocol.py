"""Framed binary wire protocol between the engine and a noise-predictor server.

Frame layout (all little-endian):
    magic "ADP2" | version u16 | msg-type u16 | payload-length u32 | payload

Message types: 1 hello, 2 denoise-req, 3 denoise-resp, 4 decode-req,
5 decode-resp, 6 encode-req, 7 encode-resp, 8 error. Tensors inside payloads
use the LTNS container (images ride as f32 LTNS with 0..255 values).

Denoise request payload:
    request_id u64 | timestep u32 | guidance f32 | token-count u32
    | tokens u32 each | flags u8 | [condition LTNS] | latent LTNS
where flags bit0 = condition present, bit1 = capture attention.

Denoise response payload:
    request_id u64 | eps LTNS | att-flag u8 | [att-scale u32 | attention LTNS]

Decode/encode payloads: request_id u64 | tensor LTNS.
Error payload: request_id u64 | UTF-8 message.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .backend import DenoiseRequest, DenoiseResponse
from .errors import ProtocolError
from .latent import pack_ltns, unpack_ltns
from .prompts import CrossAttentionMap, attention_from_ltns, attention_to_ltns

MAGIC = b"ADP2"
VERSION = 1
HEADER_LEN = 12

MSG_HELLO = 1
MSG_DENOISE_REQ = 2
MSG_DENOISE_RESP = 3
MSG_DECODE_REQ = 4
MSG_DECODE_RESP = 5
MSG_ENCODE_REQ = 6
MSG_ENCODE_RESP = 7
MSG_ERROR = 8

_FLAG_CONDITION = 0x01
_FLAG_CAPTURE = 0x02


@dataclass(frozen=True)
class HelloInfo:
    latent_h: int
    latent_w: int
    latent_c: int
    spatial_factor: int
    vocab_size: int


def pack_frame(msg_type: int, payload: bytes, version: int = VERSION) -> bytes:
    return MAGIC + struct.pack("<HHI", version, msg_type, len(payload)) + payload


def parse_header(header: bytes) -> tuple[int, int]:
    """Returns (msg_type, payload_length); raises on bad magic or version."""
    if len(header) != HEADER_LEN:
        raise ProtocolError("truncated frame header")
    if header[:4] != MAGIC:
        raise ProtocolError(f"bad frame magic {header[:4]!r}")
    version, msg_type, length = struct.unpack("<HHI", header[4:])
    if version != VERSION:
        raise ProtocolError(f"protocol version mismatch: peer {version}, ours {VERSION}")
    return msg_type, length


def read_frame(recv_exact) -> tuple[int, bytes]:
    """Read one frame via a recv_exact(n) -> bytes callable."""
    msg_type, length = parse_header(recv_exact(HEADER_LEN))
    return msg_type, recv_exact(length) if length else b""


def encode_hello_request() -> bytes:
    return pack_frame(MSG_HELLO, b"")


def encode_hello_response(info: HelloInfo) -> bytes:
    payload = struct.pack(
        "<IIIII", info.latent_h, info.latent_w, info.latent_c, info.spatial_factor, info.vocab_size
    )
    return pack_frame(MSG_HELLO, payload)


def decode_hello_response(payload: bytes) -> HelloInfo:
    if len(payload) != 20:
        raise ProtocolError(f"hello response must be 20 bytes, got {len(payload)}")
    return HelloInfo(*struct.unpack("<IIIII", payload))


def encode_denoise_request(req: DenoiseRequest) -> bytes:
    flags = 0
    if req.condition is not None:
        flags |= _FLAG_CONDITION
    if req.capture_attention:
        flags |= _FLAG_CAPTURE
    parts = [
        struct.pack(
            "<QIfI", req.request_id, req.timestep, req.guidance_scale, len(req.prompt_tokens)
        ),
        struct.pack(f"<{len(req.prompt_tokens)}I", *req.prompt_tokens)
        if req.prompt_tokens
        else b"",
        struct.pack("<B", flags),
    ]
    if req.condition is not None:
        parts.append(pack_ltns(req.condition.astype(np.float32)))
    parts.append(pack_ltns(req.latent))
    return b"".join(parts)


def decode_denoise_request(payload: bytes) -> DenoiseRequest:
    try:
        request_id, timestep, guidance, n_tokens = struct.unpack_from("<QIfI", payload, 0)
        offset = 20
        tokens = struct.unpack_from(f"<{n_tokens}I", payload, offset) if n_tokens else ()
        offset += 4 * n_tokens
        (flags,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        condition = None
        if flags & _FLAG_CONDITION:
            cond_f32, offset = unpack_ltns(payload, offset)
            condition = np.clip(np.rint(cond_f32), 0, 255).astype(np.uint8)
        latent, offset = unpack_ltns(payload, offset)
    except (struct.error, IndexError) as exc:
        raise ProtocolError(f"malformed denoise request: {exc}") from exc
    if offset != len(payload):
        raise ProtocolError(f"{len(payload) - offset} trailing bytes in denoise request")
    return DenoiseRequest(
        latent=latent,
        timestep=timestep,
        prompt_tokens=tuple(int(t) for t in tokens),
        guidance_scale=guidance,
        condition=condition,
        capture_attention=bool(flags & _FLAG_CAPTURE),
        request_id=request_id,
    )


def encode_denoise_response(resp: DenoiseResponse) -> bytes:
    parts = [struct.pack("<Q", resp.request_id), pack_ltns(resp.eps_pred)]
    if resp.attention is not None:
        parts.append(struct.pack("<BI", 1, resp.attention.scale))
        parts.append(attention_to_ltns(resp.attention))
    else:
        parts.append(struct.pack("<B", 0))
    return b"".join(parts)


def decode_denoise_response(payload: bytes) -> DenoiseResponse:
    try:
        (request_id,) = struct.unpack_from("<Q", payload, 0)
        eps, offset = unpack_ltns(payload, 8)
        (flag,) = struct.unpack_from("<B", payload, offset)
        offset += 1
        attention: CrossAttentionMap | None = None
        if flag:
            (scale,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            attention, offset = attention_from_ltns(payload, scale=scale, offset=offset)
    except (struct.error, IndexError) as exc:
        raise ProtocolError(f"malformed denoise response: {exc}") from exc
    if offset != len(payload):
        raise ProtocolError(f"{len(payload) - offset} trailing bytes in denoise response")
    return DenoiseResponse(eps_pred=eps, request_id=request_id, attention=attention)


def encode_tensor_message(request_id: int, tensor: np.ndarray) -> bytes:
    return struct.pack("<Q", request_id) + pack_ltns(np.asarray(tensor, dtype=np.float32))


def decode_tensor_message(payload: bytes) -> tuple[int, np.ndarray]:
    try:
        (request_id,) = struct.unpack_from("<Q", payload, 0)
        tensor, offset = unpack_ltns(payload, 8)
    except (struct.error, IndexError) as exc:
        raise ProtocolError(f"malformed tensor message: {exc}") from exc
    if offset != len(payload):
        raise ProtocolError("trailing bytes in tensor message")
    return request_id, tensor


def encode_error(request_id: int, message: str) -> bytes:
    return struct.pack("<Q", request_id) + message.encode("utf-8")


def decode_error(payload: bytes) -> tuple[int, str]:
    if len(payload) < 8:
        raise ProtocolError("malformed error payload")
    (request_id,) = struct.unpack_from("<Q", payload, 0)
    return request_id, payload[8:].decode("utf-8")
