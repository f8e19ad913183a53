"""Checkpoint archives: one .npz holding every weight array keyed by module
path, plus the model configs and a format tag.

The zip entries carry fixed timestamps so identical training runs produce
byte-identical checkpoint files.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict
from pathlib import Path

import numpy as np
import torch

from medmatting.core import FormatError
from medmatting.maskgen import BackboneConfig, MaskGenerator
from medmatting.mattingnet import MattingConfig, MattingNetwork

FORMAT_TAG = "medmatting-checkpoint"
FORMAT_VERSION = 1
META_KEY = "__meta__"
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


def _write_npz_deterministic(path, arrays: dict[str, np.ndarray]) -> None:
    with zipfile.ZipFile(Path(path), "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=_ZIP_EPOCH)
            zf.writestr(info, buf.getvalue())


def save_checkpoint(
    path,
    generator: MaskGenerator,
    matting: MattingNetwork,
    extra: dict | None = None,
) -> Path:
    meta = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "backbone": asdict(generator.config),
        "matting": {
            **asdict(matting.config),
            "in_channels": matting.in_channels,
            "feature_channels": matting.feature_channels,
        },
        "extra": extra or {},
    }
    arrays = {META_KEY: np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for prefix, model in (("maskgen", generator), ("mattingnet", matting)):
        for key, value in model.state_dict().items():
            arrays[f"{prefix}/{key}"] = value.detach().cpu().numpy()
    _write_npz_deterministic(path, arrays)
    return Path(path)


def load_checkpoint(path) -> tuple[MaskGenerator, MattingNetwork, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such checkpoint: {path}")
    with np.load(path) as npz:
        if META_KEY not in npz:
            raise FormatError(f"{path} is not a checkpoint archive (missing metadata)")
        meta = json.loads(bytes(npz[META_KEY]).decode())
        if meta.get("format") != FORMAT_TAG:
            raise FormatError(f"unexpected archive format tag {meta.get('format')!r}")
        if meta.get("version") != FORMAT_VERSION:
            raise FormatError(
                f"checkpoint version {meta.get('version')} != supported {FORMAT_VERSION}"
            )
        generator = MaskGenerator(BackboneConfig(**meta["backbone"]))
        m = dict(meta["matting"])
        matting = MattingNetwork(
            in_channels=m.pop("in_channels"),
            feature_channels=m.pop("feature_channels"),
            config=MattingConfig(**{**m, "unit_channels": tuple(m.pop("unit_channels"))}),
        )
        for prefix, model in (("maskgen", generator), ("mattingnet", matting)):
            state = {}
            for key in model.state_dict():
                full = f"{prefix}/{key}"
                if full not in npz:
                    raise FormatError(f"checkpoint missing weight array {full!r}")
                state[key] = torch.as_tensor(npz[full])
            model.load_state_dict(state, strict=True)
    generator.eval()
    matting.eval()
    return generator, matting, meta["extra"]
