#!/usr/bin/env python3
# Copyright 2026 The mpenc-rs Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Generates the golden wire vectors under crates/core/tests/vectors/.

This is a second implementation of the wire format written against the
format description alone, using Python's hashlib/base64 and the
`cryptography` package. It shares no code with the Rust crate.

    python3 tools/gen_vectors.py [OUTDIR]
"""

import base64
import hashlib
import json
import os
import struct
import sys

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

PROTOCOL_VERSION = 0x0001
MSG_GREETING = 0x00
MSG_DATA = 0x01

T = {
    "PROTOCOL_VERSION": 0x0001,
    "MESSAGE_TYPE": 0x0002,
    "MESSAGE_SIGNATURE": 0x0003,
    "MESSAGE_IV": 0x0004,
    "MESSAGE_PAYLOAD": 0x0005,
    "SIDKEY_HINT": 0x0006,
    "MESSAGE_PARENT": 0x0010,
    "MESSAGE_BODY": 0x0011,
    "GREET_TYPE": 0x0100,
    "SOURCE": 0x0101,
    "DEST": 0x0102,
    "MEMBER": 0x0103,
    "INT_KEY": 0x0104,
    "NONCE": 0x0105,
    "PUB_KEY": 0x0106,
    "PREV_PF": 0x0107,
    "CHAIN_HASH": 0x0108,
    "LATEST_PM": 0x0109,
    "SESSION_SIGNATURE": 0x010A,
}


def det(label, n):
    """Deterministic filler bytes: SHA-256 in counter mode over a label."""
    out = b""
    i = 0
    while len(out) < n:
        out += hashlib.sha256(label.encode() + struct.pack(">I", i)).digest()
        i += 1
    return out[:n]


def tlv(rtype, value):
    return struct.pack(">HH", rtype, len(value)) + value


def tlvs(records):
    return b"".join(tlv(T[name], value) for name, value in records)


def frame(raw):
    return "?mpENC:" + base64.b64encode(raw).decode() + "."


def pad(data):
    size = 128
    while size < len(data) + 2:
        size *= 2
    return struct.pack(">H", len(data)) + data + b"\x00" * (size - len(data) - 2)


def aes_ctr(key, iv, data):
    enc = Cipher(algorithms.AES(key), modes.CTR(iv)).encryptor()
    return enc.update(data) + enc.finalize()


def ed_key(seed):
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    return sk, pk


def hexs(b):
    return b.hex()


def tlv_vectors():
    cases = []
    for name, records in [
        ("single", [("PROTOCOL_VERSION", b"\x00\x01")]),
        ("empty-value", [("MESSAGE_BODY", b"")]),
        ("sequence", [("MESSAGE_TYPE", b"\x01"), ("MESSAGE_BODY", b"hello, world"), ("SIDKEY_HINT", b"\xa7")]),
        ("unknown-type", [("MESSAGE_BODY", b"x")]),
        ("long-value", [("MESSAGE_BODY", det("long", 300))]),
    ]:
        recs = [{"type": T[n], "value": hexs(v)} for n, v in records]
        raw = tlvs(records)
        if name == "unknown-type":
            raw = tlv(0x7FFF, b"x")
            recs = [{"type": 0x7FFF, "value": hexs(b"x")}]
        cases.append({"name": name, "records": recs, "encoded": hexs(raw), "framed": frame(raw)})
    malformed = [
        {"name": "truncated-header", "encoded": "000100"},
        {"name": "length-exceeds-input", "encoded": "0001000561"},
        {"name": "trailing-partial-record", "encoded": hexs(tlv(1, b"\x00\x01")) + "0011"},
    ]
    not_mpenc = ["hello", "?mpENC:AAEAAgAB", "mpENC:AAEAAgAB.", "?OTR:AAEAAgAB."]
    bad_base64 = ["?mpENC:@@@@.", "?mpENC:AAEAAgAB=."]
    return {"cases": cases, "malformed": malformed, "not_mpenc": not_mpenc, "bad_base64": bad_base64}


def padding_vectors():
    cases = []
    for body_len in [0, 50, 126, 127, 200, 400, 1000]:
        body = det("pad-%d" % body_len, body_len)
        padded = pad(body)
        cases.append({"body_len": body_len, "padded_len": len(padded), "padded": hexs(padded)})
    # Sizes of a whole data-packet plaintext, one parent reference each.
    messages = []
    for body_len in [50, 200, 400]:
        body = b"m" * body_len
        plain = tlvs([("MESSAGE_PARENT", det("parent", 32)), ("MESSAGE_BODY", body)])
        messages.append({"body_len": body_len, "parents": 1, "padded_len": len(pad(plain))})
    return {"cases": cases, "messages": messages}


def data_packet(sid, gk, signer, iv, parents, body, context=b"datamsgsig", bind=True):
    binding = hashlib.sha256(sid + gk).digest()
    plain = tlvs([("MESSAGE_PARENT", p) for p in parents] + [("MESSAGE_BODY", body)])
    payload = aes_ctr(gk, iv, pad(plain))
    tail = [
        ("PROTOCOL_VERSION", struct.pack(">H", PROTOCOL_VERSION)),
        ("MESSAGE_TYPE", bytes([MSG_DATA])),
        ("MESSAGE_IV", iv),
        ("MESSAGE_PAYLOAD", payload),
    ]
    signed = context + (binding if bind else b"") + tlvs(tail)
    sig = signer.sign(signed)
    raw = tlvs([("SIDKEY_HINT", binding[:1]), ("MESSAGE_SIGNATURE", sig)] + tail)
    return raw, binding


def greeting_packet(signer, fields, context=b"greetmsgsig", prefix=b""):
    tail = tlvs(fields)
    sig = signer.sign(context + prefix + tail)
    return tlv(T["MESSAGE_SIGNATURE"], sig) + tail


def data_vectors():
    sid = det("sid", 32)
    gk = det("group key", 16)
    seed = det("eph alice", 32)
    sk, pk = ed_key(seed)
    cases = []
    for i, (body, nparents) in enumerate(
        [(b"hi", 0), ("café ☕".encode(), 1), (b"b" * 50, 1), (b"c" * 200, 2), (b"d" * 400, 3)]
    ):
        iv = det("iv-%d" % i, 16)
        parents = [det("parent-%d-%d" % (i, j), 32) for j in range(nparents)]
        raw, binding = data_packet(sid, gk, sk, iv, parents, body)
        cases.append(
            {
                "iv": hexs(iv),
                "parents": [hexs(p) for p in parents],
                "body": hexs(body),
                "packet": hexs(raw),
                "framed": frame(raw),
                "message_id": hexs(hashlib.sha256(raw).digest()),
                "payload_len": len(pad(tlvs([("MESSAGE_PARENT", p) for p in parents] + [("MESSAGE_BODY", body)]))),
            }
        )
    return {
        "sid": hexs(sid),
        "group_key": hexs(gk),
        "signer_seed": hexs(seed),
        "signer_pub": hexs(pk),
        "binding": hexs(hashlib.sha256(sid + gk).digest()),
        "hint": hashlib.sha256(sid + gk).digest()[0],
        "cases": cases,
    }


def greeting_fields(names, eph_pubs):
    # ESTABLISH upflow, first hop: alice -> bob in a group of three.
    prev_pf = det("prev pf", 32)
    return [
        ("PROTOCOL_VERSION", struct.pack(">H", PROTOCOL_VERSION)),
        ("MESSAGE_TYPE", bytes([MSG_GREETING])),
        ("GREET_TYPE", struct.pack(">H", (0x01 << 8) | 0x01)),
        ("SOURCE", names[0]),
        ("DEST", names[1]),
    ] + [("MEMBER", n) for n in names] + [
        ("INT_KEY", det("int key 0", 32)),
        ("INT_KEY", det("int key 1", 32)),
        ("NONCE", det("nonce alice", 32)),
        ("PUB_KEY", eph_pubs[0]),
        ("PREV_PF", prev_pf),
        ("CHAIN_HASH", hashlib.sha256(prev_pf).digest()),
    ]


def greeting_vectors():
    names = [b"alice", b"bob", b"carol"]
    seed = det("eph alice", 32)
    sk, pk = ed_key(seed)
    fields = greeting_fields(names, [pk])
    raw = greeting_packet(sk, fields)
    return {
        "signer_seed": hexs(seed),
        "signer_pub": hexs(pk),
        "members": [n.decode() for n in names],
        "greet_type": (0x01 << 8) | 0x01,
        "packet": hexs(raw),
        "framed": frame(raw),
        "packet_id": hexs(hashlib.sha256(raw).digest()),
    }


def context_vectors():
    """Packets signed under the wrong context. Each must fail verification."""
    names = [b"alice", b"bob", b"carol"]
    seed = det("eph alice", 32)
    sk, pk = ed_key(seed)
    sid = det("sid", 32)
    gk = det("group key", 16)
    binding = hashlib.sha256(sid + gk).digest()
    fields = greeting_fields(names, [pk])
    iv = det("iv-x", 16)
    parents = [det("parent-x", 32)]
    body = b"context separation"
    cases = [
        {
            "name": "greeting-signed-as-data",
            "kind": "greeting",
            "packet": hexs(greeting_packet(sk, fields, context=b"datamsgsig", prefix=binding)),
        },
        {
            "name": "greeting-signed-without-context",
            "kind": "greeting",
            "packet": hexs(greeting_packet(sk, fields, context=b"")),
        },
        {
            "name": "greeting-signed-as-ack",
            "kind": "greeting",
            "packet": hexs(greeting_packet(sk, fields, context=b"acksig")),
        },
        {
            "name": "data-signed-as-greeting",
            "kind": "data",
            "packet": hexs(data_packet(sid, gk, sk, iv, parents, body, context=b"greetmsgsig", bind=False)[0]),
        },
        {
            "name": "data-signed-as-greeting-with-binding",
            "kind": "data",
            "packet": hexs(data_packet(sid, gk, sk, iv, parents, body, context=b"greetmsgsig")[0]),
        },
        {
            "name": "data-signed-without-binding",
            "kind": "data",
            "packet": hexs(data_packet(sid, gk, sk, iv, parents, body, bind=False)[0]),
        },
    ]
    control = data_packet(sid, gk, sk, iv, parents, body)[0]
    return {
        "sid": hexs(sid),
        "group_key": hexs(gk),
        "signer_seed": hexs(seed),
        "members": [n.decode() for n in names],
        "control_data_packet": hexs(control),
        "control_greeting_packet": hexs(greeting_packet(sk, fields)),
        "cases": cases,
    }


def session_vectors():
    pids = [b"carol", b"alice", b"bob", b"alice2"]
    nonces = [det("nonce-" + p.decode(), 32) for p in pids]
    order = sorted(range(len(pids)), key=lambda i: pids[i])
    sid = hashlib.sha256(b"".join(pids[i] for i in order) + b"".join(nonces[i] for i in order)).digest()

    static_seed = det("static alice", 32)
    ssk, spk = ed_key(static_seed)
    _, eph_pub = ed_key(det("eph alice", 32))
    nonce = nonces[1]

    def pref(b):
        return struct.pack(">H", len(b)) + b

    authenticator = b"acksig" + pref(b"alice") + pref(eph_pub) + pref(nonce) + pref(sid)
    sig = ssk.sign(authenticator)

    secret = det("group secret point", 32)
    gk = HKDF(algorithm=hashes.SHA256(), length=16, salt=None, info=b"mpenc group key").derive(secret)

    prev_pf = det("prev pf", 32)
    genesis = hashlib.sha256(prev_pf).digest()
    initial = det("initial packet", 77)
    final = det("final packet", 91)
    after_initial = hashlib.sha256(genesis + initial).digest()
    after_final = hashlib.sha256(after_initial + final).digest()

    return {
        "sid": {"pids": [p.decode() for p in pids], "nonces": [hexs(n) for n in nonces], "sid": hexs(sid)},
        "session_signature": {
            "pid": "alice",
            "static_seed": hexs(static_seed),
            "static_pub": hexs(spk),
            "eph_pub": hexs(eph_pub),
            "nonce": hexs(nonce),
            "sid": hexs(sid),
            "authenticator": hexs(authenticator),
            "signature": hexs(sig),
        },
        "group_key": {"secret": hexs(secret), "key": hexs(gk)},
        "chain_hash": {
            "prev_pf": hexs(prev_pf),
            "genesis": hexs(genesis),
            "initial": hexs(initial),
            "after_initial": hexs(after_initial),
            "final": hexs(final),
            "after_final": hexs(after_final),
        },
    }


def main():
    here = os.path.dirname(os.path.abspath(__file__))
    out = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "..", "crates", "core", "tests", "vectors")
    os.makedirs(out, exist_ok=True)
    for name, build in [
        ("tlv", tlv_vectors),
        ("padding", padding_vectors),
        ("data", data_vectors),
        ("greeting", greeting_vectors),
        ("context", context_vectors),
        ("session", session_vectors),
    ]:
        with open(os.path.join(out, name + ".json"), "w") as f:
            json.dump(build(), f, indent=2)
            f.write("\n")


if __name__ == "__main__":
    main()
