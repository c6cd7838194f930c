"""Authentication-phase state machine and intra-group simulation harness.

A verifier holding the shared group model processes a request in a fixed
order: (1) is the claimed uid in the group list, (2) does the model predict
that uid, (3) does the confidence clear the tuned threshold. The first
failed check decides the rejection reason; a passing request is accepted.
Models without confidence (decision trees) fail step (3) for every request.

Requests and decisions cross a pluggable in-process transport as byte
frames, so the simulation exercises the same wire format a real channel
would carry.
"""

from __future__ import annotations

import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgen, simulate
from .pipeline import TrainedAuthenticator, gen_adversary

REQUEST_MAGIC = b"DPRQ"
DECISION_MAGIC = b"DPRS"


class RejectReason(enum.Enum):
    UNKNOWN_UID = "unknown_uid"
    LABEL_MISMATCH = "label_mismatch"
    LOW_CONFIDENCE = "low_confidence"
    NO_CONFIDENCE = "no_confidence"


_REASON_CODES = list(RejectReason)  # wire codes 1..4 in declaration order


@dataclass
class AuthRequest:
    uid: str
    phenotype: imgen.Phenotype


@dataclass
class AuthDecision:
    accepted: bool
    reason: RejectReason | None = None
    confidence: float | None = None

    def __post_init__(self):
        if self.accepted and self.reason is not None:
            raise ValueError("accepted decisions carry no rejection reason")
        if not self.accepted and self.reason is None:
            raise ValueError("rejections need a reason")


def check(uid: str, uid_list: list[str]) -> int:
    """Linear uid scan: 1 on first match, 0 at end of list."""
    for entry in uid_list:
        if entry == uid:
            return 1
    return 0


@dataclass
class GroupConfig:
    uid_list: list[str]
    device_seeds: dict[str, int] = field(default_factory=dict)
    seed: int = 0
    events: list[dict] = field(default_factory=list)
    verifier: str | None = None

    def __post_init__(self):
        if len(set(self.uid_list)) != len(self.uid_list):
            raise ValueError("uid list entries must be unique")


def authenticate(
    model: TrainedAuthenticator, group: GroupConfig, request: AuthRequest
) -> AuthDecision:
    """Apply the three checks in order; never runs the model for unknown uids."""
    if check(request.uid, group.uid_list) == 0:
        return AuthDecision(False, RejectReason.UNKNOWN_UID)
    pred = model.predict(request.phenotype)
    if pred.label != request.uid:
        return AuthDecision(False, RejectReason.LABEL_MISMATCH, pred.confidence)
    if pred.confidence is None or model.threshold is None:
        return AuthDecision(False, RejectReason.NO_CONFIDENCE)
    if pred.confidence < model.threshold:
        return AuthDecision(False, RejectReason.LOW_CONFIDENCE, pred.confidence)
    return AuthDecision(True, confidence=pred.confidence)


# ---------------------------------------------------------------------------
# wire frames


def encode_request(req: AuthRequest) -> bytes:
    uid = req.uid.encode("utf-8")
    if len(uid) > 0xFFFF:
        raise ValueError("uid too long for the wire format")
    return REQUEST_MAGIC + struct.pack(">H", len(uid)) + uid + req.phenotype.to_bytes()


def decode_request(frame: bytes) -> AuthRequest:
    if frame[:4] != REQUEST_MAGIC:
        raise ValueError(f"bad request magic {frame[:4]!r}")
    (ulen,) = struct.unpack_from(">H", frame, 4)
    uid = frame[6 : 6 + ulen].decode("utf-8")
    body = frame[6 + ulen :]
    if len(body) != imgen.RESPONSE_BYTES:
        raise ValueError(f"request carries {len(body)} phenotype bytes")
    return AuthRequest(uid=uid, phenotype=imgen.imgen(body))


def encode_decision(d: AuthDecision) -> bytes:
    code = 0 if d.accepted else 1 + _REASON_CODES.index(d.reason)
    conf = d.confidence if d.confidence is not None else math.nan
    return DECISION_MAGIC + bytes([code]) + struct.pack(">f", conf)


def decode_decision(frame: bytes) -> AuthDecision:
    if frame[:4] != DECISION_MAGIC:
        raise ValueError(f"bad decision magic {frame[:4]!r}")
    code = frame[4]
    (conf,) = struct.unpack_from(">f", frame, 5)
    confidence = None if math.isnan(conf) else float(conf)
    if code == 0:
        return AuthDecision(True, confidence=confidence)
    return AuthDecision(False, _REASON_CODES[code - 1], confidence)


class Verifier:
    """One group device answering request frames with decision frames."""

    def __init__(self, uid: str, model: TrainedAuthenticator, group: GroupConfig):
        self.uid = uid
        self.model = model
        self.group = group

    def handle(self, frame: bytes) -> bytes:
        return encode_decision(authenticate(self.model, self.group, decode_request(frame)))


# ---------------------------------------------------------------------------
# scripted group simulation


def _extra_flips(data: bytes, fraction: float, seed: int) -> bytes:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    mask = (np.random.default_rng(seed).random(len(bits)) < fraction).astype(np.uint8)
    return np.packbits(bits ^ mask).tobytes()


def _event_env(ev: dict) -> simulate.EnvCondition:
    return simulate.EnvCondition(
        float(ev.get("temp_c", 20.0)), float(ev.get("voltage_v", simulate.VOLTAGE_NOMINAL))
    )


def simulate_group(model: TrainedAuthenticator, group: GroupConfig) -> list[dict]:
    """Run the scripted events; returns one log record per event.

    Event kinds: legit_auth (device, pattern, temp_c, voltage_v), wrong_uid
    (device, claimed_uid, ...), random_adversary (claimed_uid optional),
    near_miss_adversary (device, extra_flip, ...). Every event measures or
    generates a fresh phenotype and routes it through the byte frames.
    """
    fingerprints = {
        dev: simulate.new_fingerprint(s, dev) for dev, s in group.device_seeds.items()
    }
    verifier_uid = group.verifier or group.uid_list[0]
    verifier = Verifier(verifier_uid, model, group)
    rng = np.random.default_rng(group.seed)
    log = []
    for index, ev in enumerate(group.events):
        noise_seed = int(rng.integers(0, 2**63))
        kind = ev["kind"]
        if kind in ("legit_auth", "wrong_uid", "near_miss_adversary"):
            device = ev["device"]
            if device not in fingerprints:
                raise ValueError(f"event {index} references unknown device {device!r}")
            pattern = simulate.ChallengePattern.parse(ev.get("pattern", "P_FF"))
            resp = simulate.measure(fingerprints[device], pattern, _event_env(ev), noise_seed)
            data = resp.data
            uid = device
            if kind == "wrong_uid":
                uid = ev["claimed_uid"]
            elif kind == "near_miss_adversary":
                flip_seed = int(rng.integers(0, 2**63))
                data = _extra_flips(data, float(ev["extra_flip"]), flip_seed)
            phenotype = imgen.imgen(data)
        elif kind == "random_adversary":
            phenotype = gen_adversary(1, noise_seed)[0]
            uid = ev.get("claimed_uid") or group.uid_list[index % len(group.uid_list)]
        else:
            raise ValueError(f"event {index} has unknown kind {kind!r}")

        reply = verifier.handle(encode_request(AuthRequest(uid=uid, phenotype=phenotype)))
        decision = decode_decision(reply)
        log.append(
            {
                "index": index,
                "kind": kind,
                "uid": uid,
                "verifier": verifier_uid,
                "accepted": decision.accepted,
                "reason": decision.reason.value if decision.reason else None,
                "confidence": decision.confidence,
            }
        )
    return log


def load_scenario(path) -> tuple[GroupConfig, str]:
    """Read a scenario file; returns (group, model_path)."""
    raw = json.loads(Path(path).read_text())
    devices = raw.get("devices", [])
    group = GroupConfig(
        uid_list=[str(u) for u in raw["uid_list"]],
        device_seeds={str(d["device_id"]): int(d["seed"]) for d in devices},
        seed=int(raw.get("seed", 0)),
        events=list(raw.get("events", [])),
        verifier=raw.get("verifier"),
    )
    return group, raw["model_path"]


def write_event_log(path, log: list[dict]) -> None:
    with open(path, "w") as fh:
        for record in log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
