"""Tensor interchange files and pair-bundle manifests.

Tensors are stored in the NPY v1.0 binary layout, restricted to C-order,
little-endian payloads with dtypes f4/f8/u1/b1. A pair bundle is a JSON
manifest mapping field names to tensor files relative to the manifest.
"""

import ast
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

MAGIC = b"\x93NUMPY"
VERSION = b"\x01\x00"
HEADER_ALIGN = 64

# dtype descriptor <-> numpy dtype; the only payloads the format admits
_DESCR_TO_DTYPE = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "|u1": np.dtype("u1"),
    "|b1": np.dtype("?"),
}
_KIND_TO_DESCR = {"f4": "<f4", "f8": "<f8", "u1": "|u1", "b1": "|b1"}

MANDATORY_FIELDS = (
    "image_1", "image_2",
    "depth_1", "depth_2",
    "intrinsics_1", "intrinsics_2",
    "extrinsics_1", "extrinsics_2",
)
OPTIONAL_FIELDS = ("features_1", "features_2", "embed_1", "embed_2", "gt_mask")
LIST_FIELDS = ("seg_masks_1", "seg_masks_2")


class BundleError(ValueError):
    """Malformed tensor file, manifest, or bundle invariant violation."""


def _descr_for(arr: np.ndarray) -> str:
    key = arr.dtype.kind + str(arr.dtype.itemsize)
    if arr.dtype == np.bool_:
        key = "b1"
    if key not in _KIND_TO_DESCR:
        raise BundleError(f"unsupported dtype: {arr.dtype}")
    return _KIND_TO_DESCR[key]


def write_tensor(t: np.ndarray, path) -> None:
    """Write an array to `path` in the interchange layout.

    Accepts f32/f64/u8/bool arrays of rank <= 4. Output is bit-exact
    reproducible: same array, same bytes.
    """
    t = np.asarray(t)
    if t.ndim > 4:
        raise BundleError(f"rank {t.ndim} exceeds the supported maximum of 4")
    descr = _descr_for(t)
    shape = t.shape  # ascontiguousarray would promote rank 0 to rank 1
    # force little-endian C-order payload
    t = np.ascontiguousarray(t.astype(_DESCR_TO_DTYPE[descr], copy=False))
    if len(shape) == 1:
        shape_repr = f"({shape[0]},)"
    else:
        shape_repr = "(" + ", ".join(str(s) for s in shape) + ")"
    header = f"{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_repr}, }}"
    prefix_len = len(MAGIC) + len(VERSION) + 2
    pad = -(prefix_len + len(header) + 1) % HEADER_ALIGN
    header = header + " " * pad + "\n"
    if len(header) > 0xFFFF:
        raise BundleError("header too long for version 1.0")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(VERSION)
        fh.write(len(header).to_bytes(2, "little"))
        fh.write(header.encode("latin1"))
        fh.write(t.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor`.

    Rejects big-endian or Fortran-order payloads, unsupported dtypes,
    and truncated files.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise BundleError(f"malformed header: bad magic in {path}")
    if raw[6:8] != VERSION:
        raise BundleError(f"malformed header: unsupported version {raw[6]}.{raw[7]}")
    hlen = int.from_bytes(raw[8:10], "little")
    header_end = 10 + hlen
    if len(raw) < header_end:
        raise BundleError("malformed header: declared length exceeds file")
    header = raw[10:header_end]
    if not header.endswith(b"\n"):
        raise BundleError("malformed header: missing terminating newline")
    try:
        meta = ast.literal_eval(header.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise BundleError(f"malformed header: {exc}") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise BundleError("malformed header: unexpected keys")
    descr = meta["descr"]
    if descr not in _DESCR_TO_DTYPE:
        raise BundleError(f"unsupported dtype descriptor: {descr!r}")
    if meta["fortran_order"] is not False:
        raise BundleError("unsupported layout: fortran_order must be False")
    shape = meta["shape"]
    if (not isinstance(shape, tuple)
            or any(not isinstance(s, int) or s < 0 for s in shape)):
        raise BundleError(f"malformed header: bad shape {shape!r}")
    if len(shape) > 4:
        raise BundleError(f"rank {len(shape)} exceeds the supported maximum of 4")
    dtype = _DESCR_TO_DTYPE[descr]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    expected = count * dtype.itemsize
    payload = raw[header_end:]
    if len(payload) < expected:
        raise BundleError(f"truncated payload: expected {expected} bytes, got {len(payload)}")
    if len(payload) > expected:
        raise BundleError(f"trailing data: expected {expected} bytes, got {len(payload)}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


@dataclass
class PairBundle:
    """All inputs for one query/reference image pair.

    Images are HxWx3 uint8, depths HxW float32 in a shared scene scale,
    intrinsics 3x3, extrinsics 4x4 world->camera. Feature maps, encoder
    embeddings, segmentation masks, and a ground-truth change mask are
    optional.
    """

    image_1: np.ndarray
    image_2: np.ndarray
    depth_1: np.ndarray
    depth_2: np.ndarray
    intrinsics_1: np.ndarray
    intrinsics_2: np.ndarray
    extrinsics_1: np.ndarray
    extrinsics_2: np.ndarray
    features_1: Optional[np.ndarray] = None
    features_2: Optional[np.ndarray] = None
    embed_1: Optional[np.ndarray] = None
    embed_2: Optional[np.ndarray] = None
    seg_masks_1: Optional[List[np.ndarray]] = None
    seg_masks_2: Optional[List[np.ndarray]] = None
    gt_mask: Optional[np.ndarray] = None
    meta: Dict[str, str] = field(default_factory=dict)

    @property
    def height(self) -> int:
        return self.image_1.shape[0]

    @property
    def width(self) -> int:
        return self.image_1.shape[1]

    def validate(self) -> "PairBundle":
        _check(self.image_1.ndim == 3 and self.image_1.shape[2] == 3
               and self.image_1.dtype == np.uint8, "image_1 must be HxWx3 uint8")
        h, w = self.image_1.shape[:2]
        for name in ("image_2",):
            arr = getattr(self, name)
            _check(arr.shape == (h, w, 3) and arr.dtype == np.uint8,
                   f"{name} must be {h}x{w}x3 uint8")
        for name in ("depth_1", "depth_2"):
            arr = getattr(self, name)
            _check(arr.shape == (h, w) and arr.dtype == np.float32,
                   f"{name} must be {h}x{w} float32")
            _check(bool(np.isfinite(arr).all()), f"{name} contains non-finite values")
        for name in ("intrinsics_1", "intrinsics_2"):
            k = getattr(self, name)
            _check(k.shape == (3, 3) and k.dtype == np.float32,
                   f"{name} must be 3x3 float32")
            _check(k[0, 0] > 0 and k[1, 1] > 0, f"{name} focal entries must be positive")
            _check(k[0, 1] == 0, f"{name} must have zero skew")
            _check(k[2, 2] == 1, f"{name}[2,2] must equal 1")
        for name in ("extrinsics_1", "extrinsics_2"):
            t = getattr(self, name)
            _check(t.shape == (4, 4) and t.dtype == np.float32,
                   f"{name} must be 4x4 float32")
            _check(np.array_equal(t[3], np.array([0, 0, 0, 1], dtype=np.float32)),
                   f"{name} bottom row must be (0,0,0,1)")
        for name in ("features_1", "features_2"):
            arr = getattr(self, name)
            if arr is not None:
                _check(arr.ndim == 4 and arr.dtype == np.float32,
                       f"{name} must be heads x h x w x d float32")
                _check(bool(np.isfinite(arr).all()), f"{name} contains non-finite values")
        for name in ("embed_1", "embed_2"):
            arr = getattr(self, name)
            if arr is not None:
                _check(arr.ndim == 3 and arr.dtype == np.float32,
                       f"{name} must be h x w x d float32")
                _check(bool(np.isfinite(arr).all()), f"{name} contains non-finite values")
        for name in ("seg_masks_1", "seg_masks_2"):
            masks = getattr(self, name)
            if masks is not None:
                for i, m in enumerate(masks):
                    _check(m.shape == (h, w) and m.dtype == np.bool_,
                           f"{name}[{i}] must be {h}x{w} bool")
        if self.gt_mask is not None:
            _check(self.gt_mask.shape == (h, w) and self.gt_mask.dtype == np.bool_,
                   f"gt_mask must be {h}x{w} bool")
        _check(isinstance(self.meta, dict)
               and all(isinstance(k, str) and isinstance(v, str) for k, v in self.meta.items()),
               "meta must map strings to strings")
        return self


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise BundleError(message)


def load_bundle(manifest_path) -> PairBundle:
    """Load and validate a pair bundle from its JSON manifest."""
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"malformed manifest: {exc}") from exc
    if not isinstance(manifest, dict):
        raise BundleError("manifest must be a JSON object")
    base = manifest_path.parent

    def load_one(rel):
        if not isinstance(rel, str):
            raise BundleError(f"manifest paths must be strings, got {rel!r}")
        return read_tensor(base / rel)

    kwargs = {}
    for name in MANDATORY_FIELDS:
        if name not in manifest:
            raise BundleError(f"missing mandatory field {name}")
        kwargs[name] = load_one(manifest[name])
    for name in OPTIONAL_FIELDS:
        if name in manifest:
            kwargs[name] = load_one(manifest[name])
    for name in LIST_FIELDS:
        if name in manifest:
            paths = manifest[name]
            if not isinstance(paths, list):
                raise BundleError(f"{name} must be an array of paths")
            kwargs[name] = [load_one(p) for p in paths]
    meta = manifest.get("meta", {})
    if not isinstance(meta, dict):
        raise BundleError("meta must be a JSON object")
    kwargs["meta"] = {str(k): str(v) for k, v in meta.items()}
    return PairBundle(**kwargs).validate()


def save_bundle(bundle: PairBundle, out_dir, manifest_name: str = "manifest.json") -> Path:
    """Write every tensor of `bundle` plus a manifest into `out_dir`."""
    bundle.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: Dict[str, object] = {}
    for name in MANDATORY_FIELDS + OPTIONAL_FIELDS:
        arr = getattr(bundle, name)
        if arr is None:
            continue
        rel = f"{name}.npy"
        write_tensor(arr, out_dir / rel)
        manifest[name] = rel
    for name in LIST_FIELDS:
        masks = getattr(bundle, name)
        if masks is None:
            continue
        rels = []
        for i, m in enumerate(masks):
            rel = f"{name}_{i:03d}.npy"
            write_tensor(m, out_dir / rel)
            rels.append(rel)
        manifest[name] = rels
    manifest["meta"] = dict(bundle.meta)
    path = out_dir / manifest_name
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
