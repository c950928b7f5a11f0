"""
Checkpoint container.

A ``.npz`` archive holding flat parameter arrays for the five networks,
optimizer momentum buffers, and a JSON metadata record (format version,
tower topology descriptor and its hash, step, EMA and optimizer settings).
Loading against an expected topology rejects mismatched hashes.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np

from config.env import get_checkpoint_config
from engine.byol.ema import EmaSchedule
from engine.byol.towers import ByolTowers, TowerTopology
from engine.errors import FormatError, TopologyMismatchError
from engine.nn_core.network import MlpNetwork
from engine.nn_core.optim import SgdState

logger = logging.getLogger(__name__)

FORMAT_VERSION = int(get_checkpoint_config().get("format_version", 1))
_META_KEY = "__meta__"


@dataclass
class Checkpoint:
    towers: ByolTowers
    optimizer: Optional[SgdState] = None
    ema: Optional[EmaSchedule] = None
    step: int = 0
    meta: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: Union[str, Path], towers: ByolTowers, optimizer: Optional[SgdState] = None,
                    step: int = 0, extra: Optional[Dict[str, Any]] = None,
                    ema: Optional[EmaSchedule] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    topology = towers.topology
    meta = {
        "format_version": FORMAT_VERSION,
        "topology": topology.describe(),
        "topology_hash": topology.topology_hash(),
        "step": int(step),
        "optimizer": None if optimizer is None else {
            "momentum": optimizer.momentum,
            "weight_decay": optimizer.weight_decay,
        },
        "ema": None if ema is None else {
            "tau_base": ema.tau_base,
            "mode": ema.mode.value,
            "total_steps": ema.total_steps,
            "next_tau": ema.tau(step),
        },
        "extra": extra or {},
    }
    arrays = {f"params/{key}": value for key, value in towers.all_parameters().items()}
    if optimizer is not None:
        arrays.update({f"optim/{key}": value for key, value in optimizer.momentum_buffers.items()})
    arrays[_META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)
    logger.debug(f"Saved checkpoint {path} at step {step}")
    return path


def load_checkpoint(path: Union[str, Path], expected: Optional[TowerTopology] = None) -> Checkpoint:
    """Load a checkpoint; with ``expected`` the topology hashes must agree."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint '{path}' does not exist")
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot read checkpoint {path}: {e}")
    with archive:
        if _META_KEY not in archive.files:
            raise FormatError(f"checkpoint {path} has no metadata record")
        meta = json.loads(str(archive[_META_KEY]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"checkpoint format version {meta.get('format_version')} != {FORMAT_VERSION}")
        topology = TowerTopology.from_description(meta["topology"])
        if topology.topology_hash() != meta["topology_hash"]:
            raise TopologyMismatchError(meta["topology_hash"], topology.topology_hash())
        if expected is not None and expected.topology_hash() != meta["topology_hash"]:
            raise TopologyMismatchError(expected.topology_hash(), meta["topology_hash"])

        params = {name[len("params/"):]: archive[name] for name in archive.files if name.startswith("params/")}
        buffers = {name[len("optim/"):]: np.array(archive[name]) for name in archive.files if name.startswith("optim/")}

    def network(name: str, net_topology) -> MlpNetwork:
        prefix = f"{name}/"
        own = {key[len(prefix):]: value for key, value in params.items() if key.startswith(prefix)}
        return MlpNetwork.from_parameters(net_topology, own)

    towers = ByolTowers(
        online_encoder=network("online_encoder", topology.encoder),
        online_projector=network("online_projector", topology.projector),
        online_predictor=network("online_predictor", topology.predictor),
        target_encoder=network("target_encoder", topology.encoder),
        target_projector=network("target_projector", topology.projector),
    )
    optimizer = None
    if meta.get("optimizer") is not None:
        optimizer = SgdState(momentum=meta["optimizer"]["momentum"], weight_decay=meta["optimizer"]["weight_decay"],
                             momentum_buffers=buffers)
    ema = None
    if meta.get("ema") is not None:
        ema = EmaSchedule(tau_base=meta["ema"]["tau_base"], total_steps=meta["ema"]["total_steps"],
                          mode=meta["ema"]["mode"])
    return Checkpoint(towers=towers, optimizer=optimizer, ema=ema, step=int(meta.get("step", 0)), meta=meta)
