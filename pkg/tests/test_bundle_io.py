import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from scenechange import (BundleError, load_bundle, read_tensor, save_bundle,
                         write_tensor)

from conftest import minimal_bundle

DTYPES = [np.float32, np.float64, np.uint8, np.bool_]


def _random_array(rng, dtype, shape):
    if dtype == np.bool_:
        return rng.integers(0, 2, shape).astype(bool)
    if dtype == np.uint8:
        return rng.integers(0, 256, shape, dtype=np.uint8)
    arr = rng.normal(size=shape).astype(dtype)
    return arr


@pytest.mark.parametrize("dtype", DTYPES)
@pytest.mark.parametrize("shape", [(), (0,), (5,), (3, 4), (2, 3, 4), (2, 2, 2, 3)])
def test_round_trip_bit_exact(tmp_path, rng, dtype, shape):
    arr = _random_array(rng, dtype, shape)
    path = tmp_path / "t.npy"
    write_tensor(arr, path)
    back = read_tensor(path)
    assert back.dtype == arr.dtype
    assert back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()


def test_round_trip_preserves_nan_and_inf_bits(tmp_path):
    arr = np.array([np.nan, np.inf, -np.inf, 0.0, -0.0], dtype=np.float32)
    path = tmp_path / "t.npy"
    write_tensor(arr, path)
    assert read_tensor(path).tobytes() == arr.tobytes()


def test_payload_layout_matches_definition(tmp_path):
    arr = np.array([[1, 2], [3, 4]], dtype=np.float32)
    path = tmp_path / "t.npy"
    write_tensor(arr, path)
    raw = path.read_bytes()
    assert raw[:6] == b"\x93NUMPY"
    assert raw[6:8] == b"\x01\x00"
    hlen = int.from_bytes(raw[8:10], "little")
    assert (10 + hlen) % 64 == 0
    header = raw[10:10 + hlen]
    assert header.endswith(b"\n")
    payload = raw[10 + hlen:]
    assert len(payload) == 16
    assert payload == struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)


def test_mask_round_trip_file_bytes_identical(tmp_path, rng):
    mask = rng.integers(0, 2, (128, 128)).astype(bool)
    p1, p2 = tmp_path / "a.npy", tmp_path / "b.npy"
    write_tensor(mask, p1)
    write_tensor(read_tensor(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


@pytest.mark.parametrize("dtype", DTYPES)
def test_numpy_interop_both_directions(tmp_path, rng, dtype):
    arr = _random_array(rng, dtype, (6, 7))
    ours, theirs = tmp_path / "ours.npy", tmp_path / "theirs.npy"
    write_tensor(arr, ours)
    np.save(theirs, arr)
    # independent reader accepts our files, and vice versa
    assert np.load(ours).tobytes() == arr.tobytes()
    assert read_tensor(theirs).tobytes() == arr.tobytes()
    assert ours.read_bytes() == theirs.read_bytes()


def test_non_contiguous_and_big_endian_inputs_normalized(tmp_path):
    arr = np.arange(24, dtype=">f4").reshape(4, 6)[:, ::2]
    path = tmp_path / "t.npy"
    write_tensor(arr, path)
    back = read_tensor(path)
    assert back.dtype == np.dtype("<f4")
    np.testing.assert_array_equal(back, arr.astype("<f4"))


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(BundleError, match="unsupported dtype"):
        write_tensor(np.zeros(3, dtype=np.int64), tmp_path / "t.npy")


def test_rank_limit(tmp_path):
    with pytest.raises(BundleError, match="rank"):
        write_tensor(np.zeros((1, 1, 1, 1, 1), dtype=np.float32), tmp_path / "t.npy")


def _write_raw(path, magic=b"\x93NUMPY", version=b"\x01\x00",
               header="{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }",
               payload=struct.pack("<2f", 1.0, 2.0), pad=True):
    if pad:
        fill = -(10 + len(header) + 1) % 64
        header = header + " " * fill + "\n"
    data = magic + version + len(header).to_bytes(2, "little") + header.encode("latin1") + payload
    path.write_bytes(data)
    return path


@pytest.mark.parametrize("corruption,message", [
    (dict(magic=b"\x93NUMPZ"), "bad magic"),
    (dict(version=b"\x02\x00"), "unsupported version"),
    (dict(header="{'descr': '<f4', 'fortran_order': True, 'shape': (2,), }"),
     "unsupported layout"),
    (dict(header="{'descr': '>f4', 'fortran_order': False, 'shape': (2,), }"),
     "unsupported dtype"),
    (dict(header="{'descr': '<i4', 'fortran_order': False, 'shape': (2,), }"),
     "unsupported dtype"),
    (dict(header="{'descr': '<f4', 'fortran_order': False, 'shape': (3,), }"),
     "truncated"),
    (dict(header="{'descr': '<f4', 'fortran_order': False, 'shape': (1,), }"),
     "trailing"),
    (dict(header="{'descr': '<f4', 'fortran_order': False, 'shape': (-2,), }"),
     "bad shape"),
    (dict(header="{'descr': '<f4', 'fortran_order': False, 'shape': (1, 1, 1, 1, 2), }"),
     "rank"),
    (dict(header="not a dict"), "malformed header"),
    (dict(header="{'descr': '<f4', 'fortran_order': False}"), "unexpected keys"),
])
def test_malformed_files_rejected(tmp_path, corruption, message):
    path = _write_raw(tmp_path / "bad.npy", **corruption)
    with pytest.raises(BundleError, match=message):
        read_tensor(path)


def test_header_without_newline_rejected(tmp_path):
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': (2,), }"
    path = _write_raw(tmp_path / "bad.npy", header=header + " " * 10, pad=False)
    with pytest.raises(BundleError, match="newline"):
        read_tensor(path)


def test_truncated_file_rejected(tmp_path):
    path = _write_raw(tmp_path / "t.npy")
    data = path.read_bytes()
    path.write_bytes(data[:len(data) - 3])
    with pytest.raises(BundleError, match="truncated"):
        read_tensor(path)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_round_trip_property(tmp_path_factory, data):
    dtype = data.draw(st.sampled_from(["<f4", "<f8", "u1", "?"]))
    shape = data.draw(hnp.array_shapes(min_dims=0, max_dims=4, max_side=5))
    arr = data.draw(hnp.arrays(dtype=np.dtype(dtype), shape=shape))
    path = tmp_path_factory.mktemp("rt") / "t.npy"
    write_tensor(arr, path)
    back = read_tensor(path)
    assert back.dtype == arr.dtype and back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()


# ---------------------------------------------------------------------------
# bundles


def test_bundle_round_trip(tmp_path):
    bundle = minimal_bundle()
    manifest = save_bundle(bundle, tmp_path)
    back = load_bundle(manifest)
    assert back.meta == bundle.meta
    np.testing.assert_array_equal(back.image_1, bundle.image_1)
    np.testing.assert_array_equal(back.depth_2, bundle.depth_2)
    np.testing.assert_array_equal(back.features_1, bundle.features_1)
    np.testing.assert_array_equal(back.seg_masks_2[0], bundle.seg_masks_2[0])
    np.testing.assert_array_equal(back.gt_mask, bundle.gt_mask)


def test_bundle_optional_fields_absent(tmp_path):
    bundle = minimal_bundle()
    bundle.features_1 = bundle.features_2 = None
    bundle.embed_1 = bundle.embed_2 = None
    bundle.seg_masks_1 = bundle.seg_masks_2 = None
    bundle.gt_mask = None
    manifest = save_bundle(bundle, tmp_path)
    back = load_bundle(manifest)
    assert back.features_1 is None and back.seg_masks_1 is None
    assert back.gt_mask is None


def test_missing_mandatory_field(tmp_path):
    manifest_path = save_bundle(minimal_bundle(), tmp_path)
    manifest = json.loads(manifest_path.read_text())
    del manifest["depth_2"]
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(BundleError, match="missing mandatory field depth_2"):
        load_bundle(manifest_path)


def test_extrinsics_bottom_row_invariant(tmp_path):
    bundle = minimal_bundle()
    manifest_path = save_bundle(bundle, tmp_path)
    bad = bundle.extrinsics_1.copy()
    bad[3, 3] = 2.0
    write_tensor(bad, tmp_path / "extrinsics_1.npy")
    with pytest.raises(BundleError, match="bottom row"):
        load_bundle(manifest_path)


def test_dimension_mismatch_rejected(tmp_path):
    bundle = minimal_bundle()
    manifest_path = save_bundle(bundle, tmp_path)
    write_tensor(np.zeros((4, 4), dtype=np.float32), tmp_path / "depth_1.npy")
    with pytest.raises(BundleError):
        load_bundle(manifest_path)


def test_nonfinite_depth_rejected(tmp_path):
    bundle = minimal_bundle()
    manifest_path = save_bundle(bundle, tmp_path)
    bad = bundle.depth_1.copy()
    bad[0, 0] = np.nan
    write_tensor(bad, tmp_path / "depth_1.npy")
    with pytest.raises(BundleError, match="non-finite"):
        load_bundle(manifest_path)


CORRUPTIONS = [
    lambda b: setattr(b, "image_2", b.image_2[:-1]),
    lambda b: setattr(b, "depth_1", b.depth_1.astype(np.float64)),
    lambda b: setattr(b, "intrinsics_1", np.zeros((3, 3), dtype=np.float32)),
    lambda b: b.intrinsics_2.__setitem__((0, 1), 0.5),
    lambda b: b.intrinsics_2.__setitem__((2, 2), 2.0),
    lambda b: b.extrinsics_2.__setitem__((3, 0), 1.0),
    lambda b: b.depth_2.__setitem__((0, 0), np.inf),
    lambda b: setattr(b, "features_1", b.features_1[0]),
    lambda b: setattr(b, "seg_masks_1", [b.seg_masks_1[0].astype(np.uint8)]),
    lambda b: setattr(b, "gt_mask", b.gt_mask[:-1]),
    lambda b: setattr(b, "meta", {"k": 3}),
]


@pytest.mark.parametrize("corrupt", CORRUPTIONS)
def test_no_invalid_bundle_survives_validation(tmp_path, corrupt):
    bundle = minimal_bundle()
    corrupt(bundle)
    with pytest.raises(BundleError):
        bundle.validate()
        save_bundle(bundle, tmp_path)
