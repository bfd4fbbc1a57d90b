"""Versioned binary checkpoints of a :class:`~gaclab.gac.Trainer`.

Layout::

    GACLAB-CHECKPOINT <version>\\n
    <header length in bytes>\\n
    <JSON header: config, scalars, RNG states, array table (name, shape, offset)>
    <raw little-endian float64 arrays, concatenated in table order>

JSON is written with sorted keys and ``repr`` floats, so save -> load -> save
reproduces the file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..diffcore import Tensor
from ..gac import Trainer
from .config import gac_from_dict

MAGIC = b"GACLAB-CHECKPOINT"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _param_arrays(prefix: str, params) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v.data for k, v in params.items()}


def trainer_state(tr: Trainer) -> tuple[dict, dict[str, np.ndarray]]:
    agent = tr.agent
    arrays: dict[str, np.ndarray] = {}
    arrays.update(_param_arrays("params/actor", agent.actor.params))
    for name, params in agent.ensemble.all_params().items():
        arrays.update(_param_arrays(f"params/{name}", params))
    optimizers = {"actor": agent.actor_opt, "critic": agent.critic_opt, "alpha": agent.alpha_opt}
    for oname, opt in optimizers.items():
        arrays.update({f"opt/{oname}/{k}": v for k, v in opt.state_arrays().items()})
    arrays["normalizer/mean"] = tr.normalizer.mean
    arrays["normalizer/m2"] = tr.normalizer.m2
    arrays.update({f"buffer/{k}": v for k, v in tr.buffer.arrays().items()})
    arrays["env/state"] = tr.env.get_state()
    arrays["eval_env/state"] = tr.eval_env.get_state()
    if tr.obs is not None:
        arrays["obs/raw"] = tr.obs
    ad = agent.adaptive
    meta = {
        "seed": tr.seed,
        "config": tr.config.as_dict(),
        "iteration": tr.iteration,
        "env_steps": tr.env_steps,
        "optimizer_steps": {k: opt.t for k, opt in optimizers.items()},
        "adaptive": {"log_alpha": ad.log_alpha, "beta": ad.beta, "alpha_min": ad.alpha_min,
                     "alpha_max": ad.alpha_max, "delta_beta": ad.delta_beta},
        "normalizer_count": tr.normalizer.count,
        "buffer": {"cursor": tr.buffer.cursor, "fill": tr.buffer.fill},
        "rng": {name: g.bit_generator.state for name, g in sorted(tr.streams.items())},
    }
    return meta, arrays


def encode(meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    table, blobs, offset = [], [], 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype="<f8")  # tobytes() is C-ordered; keeps 0-d shapes
        table.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"version": VERSION, "meta": meta, "arrays": table},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([MAGIC, b" %d\n" % VERSION, b"%d\n" % len(header), header, *blobs])


def decode(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    try:
        first, rest = data.split(b"\n", 1)
        magic, version = first.rsplit(b" ", 1)
        hlen_text, rest = rest.split(b"\n", 1)
        hlen = int(hlen_text)
    except ValueError:
        raise CheckpointError("not a gaclab checkpoint (bad preamble)") from None
    if magic != MAGIC:
        raise CheckpointError("not a gaclab checkpoint (bad magic)")
    if int(version) != VERSION:
        raise CheckpointError(f"checkpoint format version {int(version)} is not supported (expected {VERSION})")
    header = json.loads(rest[:hlen].decode("utf-8"))
    body = rest[hlen:]
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arrays[entry["name"]] = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape).copy()
    return header["meta"], arrays


def save_checkpoint(tr: Trainer, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(*trainer_state(tr)))
    tmp.replace(path)
    return path


def _restore_params(params, arrays, prefix):
    for k, p in params.items():
        params[k] = Tensor(arrays[f"{prefix}/{k}"], requires_grad=True)


def _opt_arrays(arrays, oname):
    pre = f"opt/{oname}/"
    return {k[len(pre):]: v for k, v in arrays.items() if k.startswith(pre)}


def restore(meta: dict, arrays: dict[str, np.ndarray]) -> Trainer:
    tr = Trainer(gac_from_dict(meta["config"]), meta["seed"])
    agent = tr.agent
    _restore_params(agent.actor.params, arrays, "params/actor")
    for name, params in agent.ensemble.all_params().items():
        _restore_params(params, arrays, f"params/{name}")
    for oname, opt in (("actor", agent.actor_opt), ("critic", agent.critic_opt), ("alpha", agent.alpha_opt)):
        opt.load_state_arrays(meta["optimizer_steps"][oname], _opt_arrays(arrays, oname))
    ad = meta["adaptive"]
    agent.adaptive.log_alpha = float(ad["log_alpha"])
    agent.adaptive.beta = float(ad["beta"])
    tr.normalizer.count = int(meta["normalizer_count"])
    tr.normalizer.mean = arrays["normalizer/mean"]
    tr.normalizer.m2 = arrays["normalizer/m2"]
    buf = meta["buffer"]
    tr.buffer.load_arrays({k: arrays[f"buffer/{k}"] for k in ("s", "a", "r", "s_next", "terminal")},
                          buf["cursor"], buf["fill"])
    tr.env.set_state(arrays["env/state"])
    tr.eval_env.set_state(arrays["eval_env/state"])
    tr.obs = arrays.get("obs/raw")
    tr.iteration = int(meta["iteration"])
    tr.env_steps = int(meta["env_steps"])
    for name, state in meta["rng"].items():
        tr.streams[name].bit_generator.state = state
    return tr


def load_checkpoint(path) -> Trainer:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e.strerror}") from None
    return restore(*decode(data))

