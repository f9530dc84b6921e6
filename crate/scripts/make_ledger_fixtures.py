"""Build the ledger fixtures in crates/core/testdata with an implementation that
shares no code with the Rust crate: block encoding, SHA-256 and Ed25519 all come
from Python (hashlib and the `cryptography` package).

    python3 scripts/make_ledger_fixtures.py

Writes:
  golden_block.json      one block plus its signing bytes, for byte-level checks
  golden_chain.jsonl     a valid 6-block chain
  tampered_chain.jsonl   the same chain with block 3's battery life edited
  authority.pub.json     public key of the fixture authority
"""

import hashlib
import json
import struct
from pathlib import Path

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

TAG = "sensorchain/block/v1"
ZERO = "0" * 64
KEY_ID = "fixture-authority"
SEED = bytes(range(32))
OUT = Path(__file__).resolve().parent.parent / "crates" / "core" / "testdata"


def real(v):
    # shortest round-trip decimal; integral values print without a fraction
    s = repr(float(v))
    return s[:-2] if s.endswith(".0") else s


def field(s):
    b = s.encode("utf-8")
    return struct.pack(">I", len(b)) + b


def signing_bytes(b):
    parts = [TAG, str(b["index"]), b["network_id"], real(b["predicted_battery_life"]),
             b["date_of_prediction"], str(b["created_at"]), b["prev_hash"], b["creator_key_id"]]
    return b"".join(field(p) for p in parts)


def seal(key, b):
    b = dict(b, creator_key_id=KEY_ID)
    msg = signing_bytes(b)
    b["signature"] = key.sign(msg).hex()
    b["hash"] = hashlib.sha256(msg + field(b["signature"])).hexdigest()
    return b


def line(b):
    return json.dumps(b, sort_keys=True, separators=(",", ":"))


def main():
    key = Ed25519PrivateKey.from_private_bytes(SEED)
    public = key.public_key().public_bytes_raw().hex()
    genesis = seal(key, {
        "index": 0, "network_id": "GENESIS", "predicted_battery_life": 0.0,
        "date_of_prediction": "1970-01-01", "created_at": 1700000000, "prev_hash": ZERO,
    })
    chain = [genesis]
    readings = [("Calumet Beach", 61.25), ("Rainbow Beach", 57.5), ("Calumet Beach", 63.84),
                ("Montrose Beach", 70.125), ("Ohio Street Beach", 58.3)]
    for i, (beach, bl) in enumerate(readings, start=1):
        chain.append(seal(key, {
            "index": i, "network_id": beach, "predicted_battery_life": bl,
            "date_of_prediction": f"2024-06-{i:02d}", "created_at": 1700000000 + 3600 * i,
            "prev_hash": chain[-1]["hash"],
        }))

    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / "golden_chain.jsonl").write_text("".join(line(b) + "\n" for b in chain))
    tampered = [dict(b) for b in chain]
    tampered[3]["predicted_battery_life"] = 93.84
    (OUT / "tampered_chain.jsonl").write_text("".join(line(b) + "\n" for b in tampered))
    pub = {"key_id": KEY_ID, "public_key": public}
    (OUT / "authority.pub.json").write_text(json.dumps(pub, indent=2) + "\n")
    golden = {
        "seed_hex": SEED.hex(),
        "public_key": public,
        "block": chain[1],
        "signing_bytes_hex": signing_bytes(chain[1]).hex(),
        "genesis_hash": genesis["hash"],
    }
    (OUT / "golden_block.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
