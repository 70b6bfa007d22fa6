"""Versioned binary checkpoints.

Layout (little endian)::

    b"SEADSCKP" | u32 version | u64 header length | header (JSON, sorted keys)
    | array payloads in header order | u32 CRC-32 of everything before it

The header carries the run configuration, scalar training state and one
``{"name", "dtype", "shape"}`` entry per array. Serialisation is fully
deterministic, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
import zlib
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .. import boardgames as bg
from ..embedding import EpisodeRecord
from ..neural import AdamState, Mlp
from ..training import Trainer

MAGIC = b"SEADSCKP"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIQ")
_CRC = struct.Struct("<I")
_DTYPES = ("<f8", "<i8", "|u1", "|b1")
_CAUSES = ("symbolic_change", "step_limit")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str  # "seads" or "baseline"
    config: dict
    state: dict = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = FORMAT_VERSION


# --- raw format --------------------------------------------------------------


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries, payload = [], []
    for name in sorted(ckpt.arrays):
        a = np.asarray(ckpt.arrays[name])
        dt = a.dtype.newbyteorder("<") if a.dtype.byteorder == ">" else a.dtype
        if dt.str not in _DTYPES:
            raise CheckpointError(f"array {name!r}: unsupported dtype {a.dtype}")
        entries.append({"name": name, "dtype": dt.str, "shape": list(a.shape)})
        payload.append(np.ascontiguousarray(a, dtype=dt).tobytes())
    header = {"kind": ckpt.kind, "config": ckpt.config, "state": ckpt.state, "arrays": entries}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = _PREFIX.pack(MAGIC, ckpt.version, len(hbytes)) + hbytes + b"".join(payload)
    return body + _CRC.pack(zlib.crc32(body))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _PREFIX.size + _CRC.size:
        raise CheckpointError("checkpoint truncated: shorter than the fixed header")
    magic, version, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}; this build reads {FORMAT_VERSION}")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    start = _PREFIX.size
    if start + hlen > len(body):
        raise CheckpointError("checkpoint truncated inside the header")
    try:
        header = json.loads(body[start : start + hlen])
    except ValueError as exc:
        raise CheckpointError(f"checkpoint header is not valid JSON: {exc}") from exc
    pos = start + hlen
    arrays = {}
    for e in header["arrays"]:
        dt = np.dtype(e["dtype"])
        n = int(np.prod(e["shape"], dtype=np.int64)) * dt.itemsize
        if pos + n > len(body):
            raise CheckpointError(f"checkpoint truncated inside array {e['name']!r}")
        arrays[e["name"]] = np.frombuffer(body, dtype=dt, count=n // dt.itemsize, offset=pos).reshape(e["shape"]).copy()
        pos += n
    if pos != len(body):
        raise CheckpointError("checkpoint has trailing bytes or is truncated")
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint checksum mismatch (file corrupted or truncated)")
    return Checkpoint(header["kind"], header["config"], header["state"], arrays, version)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


# --- component packing -------------------------------------------------------


def pack_networks(prefix: str, nets: dict[str, Mlp], arrays: dict) -> None:
    for name, net in nets.items():
        for i, p in enumerate(net.params):
            arrays[f"{prefix}{name}/p{i}"] = p


def unpack_networks(prefix: str, nets: dict[str, Mlp], arrays: dict) -> None:
    for name, net in nets.items():
        params = [arrays[f"{prefix}{name}/p{i}"] for i in range(len(net.params))]
        try:
            net.load(params)
        except ValueError as exc:
            raise CheckpointError(f"network {prefix}{name}: {exc}") from exc


def pack_optimizers(prefix: str, opts: dict[str, AdamState], arrays: dict, state: dict) -> None:
    for name, opt in opts.items():
        state[f"{prefix}{name}"] = {"lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "t": opt.t}
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"{prefix}{name}/m{i}"] = m
            arrays[f"{prefix}{name}/v{i}"] = v


def unpack_optimizers(prefix: str, opts: dict[str, AdamState], arrays: dict, state: dict) -> None:
    for name, opt in opts.items():
        s = state[f"{prefix}{name}"]
        opt.lr, opt.beta1, opt.beta2, opt.eps, opt.t = s["lr"], s["beta1"], s["beta2"], s["eps"], s["t"]
        for i in range(len(opt.m)):
            opt.m[i][...] = arrays[f"{prefix}{name}/m{i}"]
            opt.v[i][...] = arrays[f"{prefix}{name}/v{i}"]


def pack_episodes(prefix: str, episodes, arrays: dict) -> None:
    episodes = list(episodes)
    lengths = np.array([e.length for e in episodes], dtype=np.int64)
    moves = [np.array(e.moves, dtype=np.int64).reshape(-1, 2) for e in episodes]
    arrays[prefix + "lengths"] = lengths
    arrays[prefix + "k"] = np.array([e.k for e in episodes], dtype=np.int64)
    arrays[prefix + "cause"] = np.array([_CAUSES.index(e.cause) for e in episodes], dtype=np.int64)
    if episodes:
        arrays[prefix + "obs"] = np.concatenate([e.observations for e in episodes])
        arrays[prefix + "actions"] = np.concatenate([e.actions for e in episodes])
        arrays[prefix + "z0"] = np.array([e.z0 for e in episodes], dtype=np.uint8)
        arrays[prefix + "zT"] = np.array([e.zT for e in episodes], dtype=np.uint8)
        arrays[prefix + "n_moves"] = np.array([len(m) for m in moves], dtype=np.int64)
        arrays[prefix + "moves"] = np.concatenate(moves)


def unpack_episodes(prefix: str, arrays: dict) -> list[EpisodeRecord]:
    lengths = arrays[prefix + "lengths"]
    if len(lengths) == 0:
        return []
    obs, acts = arrays[prefix + "obs"], arrays[prefix + "actions"]
    n_moves, moves = arrays[prefix + "n_moves"], arrays[prefix + "moves"]
    out, o, a, mv = [], 0, 0, 0
    for i, T in enumerate(lengths):
        T = int(T)
        m = [tuple(int(x) for x in row) for row in moves[mv : mv + n_moves[i]]]
        out.append(EpisodeRecord(
            observations=obs[o : o + T + 1].copy(),
            actions=acts[a : a + T].copy(),
            k=int(arrays[prefix + "k"][i]),
            z0=arrays[prefix + "z0"][i].copy(),
            zT=arrays[prefix + "zT"][i].copy(),
            cause=_CAUSES[int(arrays[prefix + "cause"][i])],
            moves=m,
        ))
        o, a, mv = o + T + 1, a + T, mv + int(n_moves[i])
    return out


# --- trainer state -----------------------------------------------------------


def trainer_checkpoint(trainer: Trainer, config: dict) -> Checkpoint:
    arrays: dict[str, np.ndarray] = {}
    state: dict[str, Any] = {
        "env_steps": trainer.env_steps,
        "epoch": trainer.epoch,
        "history": trainer.history,
        "rng": trainer.rng.bit_generator.state,
        "optim": {},
    }
    pack_networks("agent/", trainer.agent.networks, arrays)
    pack_networks("model/", trainer.model.networks, arrays)
    pack_optimizers("agent/", trainer.agent.optimizers, arrays, state["optim"])
    pack_optimizers("model/", trainer.model.optimizers, arrays, state["optim"])
    pack_episodes("long/", trainer.buffers.long, arrays)
    pack_episodes("recent/", trainer.buffers.recent, arrays)
    return Checkpoint("seads", config, state, arrays)


def restore_trainer(trainer: Trainer, ckpt: Checkpoint) -> Trainer:
    if ckpt.kind != "seads":
        raise CheckpointError(f"expected a SEADS checkpoint, got {ckpt.kind!r}")
    s, arrays = ckpt.state, ckpt.arrays
    try:
        unpack_networks("agent/", trainer.agent.networks, arrays)
        unpack_networks("model/", trainer.model.networks, arrays)
        unpack_optimizers("agent/", trainer.agent.optimizers, arrays, s["optim"])
        unpack_optimizers("model/", trainer.model.optimizers, arrays, s["optim"])
        long_eps = unpack_episodes("long/", arrays)
        recent_eps = unpack_episodes("recent/", arrays)
    except KeyError as exc:
        raise CheckpointError(f"checkpoint is missing entry {exc}") from exc
    trainer.buffers.long = deque(long_eps, maxlen=trainer.buffers.long.maxlen)
    trainer.buffers.recent = deque(recent_eps, maxlen=trainer.buffers.recent.maxlen)
    trainer.env_steps = int(s["env_steps"])
    trainer.epoch = int(s["epoch"])
    trainer.history = [dict(r) for r in s["history"]]
    trainer.rng.bit_generator.state = s["rng"]
    return trainer


def game_of(ckpt: Checkpoint) -> tuple[str, int]:
    return ckpt.config["game"], int(ckpt.config["board_size"])


def check_game(ckpt: Checkpoint, game: Optional[str], n: Optional[int] = None) -> None:
    g, size = game_of(ckpt)
    if game is not None and (game != g or (n is not None and n != size)):
        raise CheckpointError(f"checkpoint was trained on {g} {size}x{size}, not {game} {n}x{n}")
    if g not in bg.GAMES:
        raise CheckpointError(f"checkpoint names unknown game {g!r}")
