"""On-disk dataset container.

Layout::

    dataset/
      manifest.json            schema version, seeds, preset, sample index
      sample_00000/
        patch_a.png  patch_b.png  mask_a.png  mask_b.png
        gt.json                8-element displacement, 9-element homography,
                               dynamic_area_ratio

Patches are 8-bit grayscale PNG; masks are 0/255 PNG.  gt.json keeps the
geometry at full float precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import imaging
from ..errors import DataIoError, DatasetEmpty
from .pairs import TrainingSample

SCHEMA_VERSION = 1


def _sample_dir(root: Path, idx: int) -> Path:
    return root / f"sample_{idx:05d}"


def write_dataset(path, samples: list[TrainingSample], meta: dict) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    index = []
    for i, s in enumerate(samples):
        d = _sample_dir(root, i)
        d.mkdir(exist_ok=True)
        imaging.save_gray(d / "patch_a.png", s.patch_a)
        imaging.save_gray(d / "patch_b.png", s.patch_b)
        imaging.save_gray(d / "mask_a.png", s.mask_a)
        imaging.save_gray(d / "mask_b.png", s.mask_b)
        gt = {
            "displacement": [float(v) for v in s.gt_displacement],
            "homography": [float(v) for v in s.gt_homography.ravel()],
            "dynamic_area_ratio": float(s.dynamic_area_ratio),
        }
        (d / "gt.json").write_text(json.dumps(gt, sort_keys=True, indent=1))
        index.append({"id": d.name, "dynamic_area_ratio": float(s.dynamic_area_ratio)})
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "n_samples": len(samples),
        "samples": index,
        **meta,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))


@dataclass
class LoadedDataset:
    patch_a: np.ndarray       # (N, s, s)
    patch_b: np.ndarray       # (N, s, s)
    displacement: np.ndarray  # (N, 8)
    homography: np.ndarray    # (N, 3, 3)
    mask_a: np.ndarray        # (N, s, s)
    mask_b: np.ndarray        # (N, s, s)
    ratios: np.ndarray        # (N,)
    meta: dict

    def __len__(self):
        return self.patch_a.shape[0]

    @property
    def patch_size(self) -> int:
        return self.patch_a.shape[1]


def load_dataset(path) -> LoadedDataset:
    root = Path(path)
    mf = root / "manifest.json"
    if not mf.is_file():
        raise DataIoError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(mf.read_text())
    except json.JSONDecodeError as e:
        raise DataIoError(f"unreadable manifest: {e}") from e
    entries = manifest.get("samples", [])
    if not entries:
        raise DatasetEmpty(f"dataset {root} lists no samples")

    pa, pb, ma, mb, disp, hom, ratios = [], [], [], [], [], [], []
    for entry in entries:
        d = root / entry["id"]
        try:
            pa.append(imaging.load_gray(d / "patch_a.png"))
            pb.append(imaging.load_gray(d / "patch_b.png"))
            ma.append(imaging.load_gray(d / "mask_a.png"))
            mb.append(imaging.load_gray(d / "mask_b.png"))
            gt = json.loads((d / "gt.json").read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise DataIoError(f"broken sample {d.name}: {e}") from e
        disp.append(gt["displacement"])
        hom.append(np.array(gt["homography"]).reshape(3, 3))
        ratios.append(gt["dynamic_area_ratio"])

    meta = {k: v for k, v in manifest.items() if k != "samples"}
    return LoadedDataset(
        patch_a=np.stack(pa),
        patch_b=np.stack(pb),
        displacement=np.array(disp),
        homography=np.stack(hom),
        mask_a=(np.stack(ma) >= 0.5).astype(np.float64),
        mask_b=(np.stack(mb) >= 0.5).astype(np.float64),
        ratios=np.array(ratios),
        meta=meta,
    )
