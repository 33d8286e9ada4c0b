"""Tests for the synthetic generator, slicing, patching and volume files"""
import numpy as np
import pytest
from scipy import ndimage, stats

from common.errors import CoverageError, InvalidArgumentError, VolumeFormatError
from datagen import (
    PatchSpec,
    PayloadKind,
    SyntheticSpec,
    extract_patches,
    extract_slices,
    generate_dataset,
    load_dataset,
    patch_positions,
    read_volume,
    save_dataset,
    stack_slices,
    stitch_overlap_average,
    truncated_normal,
    volume_patches,
    write_volume,
)
from datagen.patching import coverage_count
from datagen.synthetic import rater_mask
from evaluation import krippendorff_alpha


def small_spec(**overrides):
    settings = dict(extents=(16, 16), n_images=6, n_raters=3, seed=3)
    settings.update(overrides)
    return SyntheticSpec(**settings)


# === Truncated normal ===

def test_draws_stay_in_bounds(rng):
    draws = [truncated_normal(0.5, 1.0, 0.0, 1.0, rng) for _ in range(2000)]
    assert min(draws) >= 0.0 and max(draws) <= 1.0


def test_zero_sd_returns_mean(rng):
    assert truncated_normal(0.3, 0.0, 0.0, 1.0, rng) == 0.3


def test_empirical_mean_matches_closed_form(rng):
    mean, sd, low, high = 0.5, 1.0, 0.0, 1.0
    draws = np.array([truncated_normal(mean, sd, low, high, rng) for _ in range(100_000)])
    a, b = (low - mean) / sd, (high - mean) / sd
    analytic = mean + sd * (stats.norm.pdf(a) - stats.norm.pdf(b)) / (stats.norm.cdf(b) - stats.norm.cdf(a))
    assert draws.mean() == pytest.approx(analytic, rel=0.02)


def test_truncated_normal_argument_checks(rng):
    with pytest.raises(InvalidArgumentError):
        truncated_normal(0.0, 1.0, 1.0, 1.0, rng)
    with pytest.raises(InvalidArgumentError):
        truncated_normal(0.0, 1.0, 50.0, 51.0, rng)
    with pytest.raises(InvalidArgumentError):
        truncated_normal(0.0, -1.0, 0.0, 1.0, rng)


# === Generator ===

def test_same_seed_gives_identical_dataset():
    first, second = generate_dataset(small_spec()), generate_dataset(small_spec())
    for a, b in zip(first.volumes, second.volumes):
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.annotations, b.annotations)
    assert first.splits == second.splits


def test_volume_shapes_and_types():
    dataset = generate_dataset(small_spec(structure="blobs", extents=(12, 16, 16), n_images=3))
    volume = dataset.volumes[0]
    assert volume.image.shape == (12, 16, 16)
    assert volume.image.dtype == np.float32
    assert volume.annotations.shape == (3, 12, 16, 16)
    assert set(np.unique(volume.annotations)) <= {0, 1}


def test_no_jitter_gives_identical_raters():
    dataset = generate_dataset(small_spec(radius_sd=0.0, radius_mean=0.0, flip_prob=0.0))
    for volume in dataset.volumes:
        for annotation in volume.annotations:
            np.testing.assert_array_equal(annotation, volume.clean)
        assert krippendorff_alpha(volume.annotations) == pytest.approx(1.0)


def test_rater_changes_stay_in_band(rng):
    spec = small_spec(flip_prob=0.0)
    volume = generate_dataset(spec).volumes[0]
    clean = volume.clean.astype(bool)
    outside = ndimage.distance_transform_edt(~clean)
    inside = ndimage.distance_transform_edt(clean)
    band = (outside <= spec.radius_high) & (inside <= -spec.radius_low)
    for annotation in volume.annotations:
        changed = annotation.astype(bool) ^ clean
        assert not np.any(changed & ~band)


def test_flips_only_touch_the_boundary(rng):
    clean = np.zeros((12, 12), dtype=bool)
    clean[4:8, 4:8] = True
    flipped = rater_mask(clean, 0.0, 1.0, rng).astype(bool)
    ring = ndimage.binary_dilation(clean) & ~ndimage.binary_erosion(clean)
    np.testing.assert_array_equal(flipped ^ clean, ring)


def test_splits_follow_ratio():
    dataset = generate_dataset(small_spec(n_images=15))
    assert {k: len(v) for k, v in dataset.splits.items()} == {"train": 9, "val": 2, "test": 4}
    assert sorted(sum(dataset.splits.values(), [])) == list(range(15))
    assert len(dataset.split("test")) == 4


def test_default_raters_disagree_moderately():
    dataset = generate_dataset(SyntheticSpec())
    alphas = [krippendorff_alpha(v.annotations) for v in dataset.volumes]
    assert 0.3 <= float(np.mean(alphas)) <= 0.7


@pytest.mark.parametrize("overrides", [
    dict(extents=(4, 4)),
    dict(extents=(16,)),
    dict(n_raters=1),
    dict(flip_prob=1.5),
    dict(structure="rings"),
    dict(radius_low=1.0, radius_high=0.0),
    dict(structure="blobs", blob_axes=(2.0, 9.0)),
])
def test_spec_validation(overrides):
    with pytest.raises(InvalidArgumentError):
        small_spec(**overrides)


# === Slices ===

def test_slices_restack_to_volume():
    volume = generate_dataset(small_spec(extents=(10, 16, 16), n_images=3)).volumes[0]
    slices = extract_slices(volume)
    assert len(slices) == 10
    assert slices[0].image.shape == (16, 16)
    assert all(s.n_raters == 3 for s in slices)
    image, annotations = stack_slices(slices)
    np.testing.assert_array_equal(image, volume.image)
    np.testing.assert_array_equal(annotations, volume.annotations)


def test_slices_along_other_axes():
    volume = generate_dataset(small_spec(extents=(10, 12, 16), n_images=3)).volumes[0]
    slices = extract_slices(volume, axis=2)
    assert len(slices) == 16
    image, annotations = stack_slices(slices, axis=2)
    np.testing.assert_array_equal(annotations, volume.annotations)
    with pytest.raises(InvalidArgumentError):
        extract_slices(volume, axis=3)
    with pytest.raises(InvalidArgumentError):
        extract_slices(extract_slices(volume)[0])


# === Patches ===

def test_positions_clamp_final_patch():
    spec = PatchSpec((16, 16, 16), (8, 8, 8))
    positions = patch_positions((32, 32, 32), spec)
    assert len(positions) == 27
    assert positions[-1] == (16, 16, 16)
    assert len(patch_positions((30,), PatchSpec((16,), (16,)))) == 2
    assert patch_positions((30,), PatchSpec((16,), (16,)))[-1] == (14,)


@pytest.mark.parametrize("shape,extent", [((32, 32), 16), ((30, 20), 8), ((17, 9), 4)])
def test_tiling_count(shape, extent):
    spec = PatchSpec((extent,) * len(shape), (extent,) * len(shape))
    expected = int(np.prod([np.ceil(n / extent) for n in shape]))
    assert len(patch_positions(shape, spec)) == expected


def test_every_voxel_is_covered():
    spec = PatchSpec((16, 16, 16), (12, 8, 16))
    patches = extract_patches(np.zeros((33, 32, 20)), spec)
    assert coverage_count((33, 32, 20), patches).min() >= 1


def test_extract_then_stitch_is_identity(rng):
    volume = rng.normal(size=(32, 32, 32))
    for strides in [(8, 8, 8), (12, 16, 4), (16, 16, 16)]:
        patches = extract_patches(volume, PatchSpec((16, 16, 16), strides))
        np.testing.assert_allclose(stitch_overlap_average(patches, volume.shape), volume, rtol=0, atol=1e-12)


def test_constant_patches_stitch_to_constant():
    spec = PatchSpec((8, 8), (3, 5))
    patches = [(np.full((8, 8), 0.25), p) for p in patch_positions((20, 20), spec)]
    np.testing.assert_allclose(stitch_overlap_average(patches, (20, 20)), 0.25)


def test_stitch_matches_accumulation_loop(rng):
    spec = PatchSpec((4, 4), (3, 2))
    patches = [(rng.random((2, 4, 4)), p) for p in patch_positions((9, 7), spec)]
    total = np.zeros((2, 9, 7))
    count = np.zeros((9, 7))
    for patch, (i, j) in patches:
        for a in range(4):
            for b in range(4):
                total[:, i + a, j + b] += patch[:, a, b]
                count[i + a, j + b] += 1
    np.testing.assert_allclose(stitch_overlap_average(patches, (9, 7)), total / count)


def test_uncovered_voxel_is_named():
    patches = [(np.ones((4, 4)), (0, 0))]
    with pytest.raises(CoverageError) as info:
        stitch_overlap_average(patches, (4, 6))
    assert info.value.voxel == (0, 4)


def test_volume_patches_keep_annotations_aligned():
    volume = generate_dataset(small_spec(extents=(16, 16, 16), n_images=3)).volumes[0]
    patches = volume_patches(volume, PatchSpec((8, 8, 8), (8, 8, 8)))
    assert len(patches) == 8
    last = patches[-1]
    np.testing.assert_array_equal(last.image, volume.image[8:, 8:, 8:])
    np.testing.assert_array_equal(last.annotations, volume.annotations[:, 8:, 8:, 8:])


def test_patch_spec_validation():
    with pytest.raises(InvalidArgumentError):
        PatchSpec((8, 8), (0, 4))
    with pytest.raises(InvalidArgumentError):
        PatchSpec((8, 8), (9, 4))
    with pytest.raises(InvalidArgumentError):
        PatchSpec((8, 8), (4,))
    with pytest.raises(InvalidArgumentError):
        patch_positions((6, 10), PatchSpec((8, 8)))


# === Volume files ===

def test_volume_file_layout(tmp_path):
    mask = np.zeros((2, 3), dtype=np.uint8)
    mask[1, 2] = 1
    path = write_volume(tmp_path / "m.pvol", mask, PayloadKind.MASK)
    blob = path.read_bytes()
    assert blob[:5] == b"PVOL1"
    assert blob[5] == 2
    assert blob[6:14] == (2).to_bytes(4, "little") + (3).to_bytes(4, "little")
    assert blob[14] == 1
    assert blob[15:] == mask.tobytes()
    array, kind = read_volume(path)
    assert kind is PayloadKind.MASK
    np.testing.assert_array_equal(array, mask)


def test_image_files_keep_float32(tmp_path, rng):
    image = rng.normal(size=(4, 5, 6)).astype(np.float32)
    array, kind = read_volume(write_volume(tmp_path / "i.pvol", image, PayloadKind.IMAGE))
    assert kind is PayloadKind.IMAGE
    np.testing.assert_array_equal(array, image)


def test_corrupt_volume_files(tmp_path):
    path = write_volume(tmp_path / "m.pvol", np.ones((3, 3)), PayloadKind.MASK)
    blob = path.read_bytes()
    (tmp_path / "short.pvol").write_bytes(blob[:-1])
    (tmp_path / "magic.pvol").write_bytes(b"XVOL1" + blob[5:])
    (tmp_path / "kind.pvol").write_bytes(blob[:14] + b"\x07" + blob[15:])
    for name in ("short.pvol", "magic.pvol", "kind.pvol", "missing.pvol"):
        with pytest.raises(VolumeFormatError):
            read_volume(tmp_path / name)
    with pytest.raises(VolumeFormatError):
        write_volume(tmp_path / "bad.pvol", np.full((2, 2), 2), PayloadKind.MASK)


def test_dataset_directory_round_trip(tmp_path):
    spec = small_spec()
    dataset = generate_dataset(spec)
    manifest = save_dataset(dataset, tmp_path / "data", spec)
    assert manifest.name == "dataset.json"
    loaded = load_dataset(tmp_path / "data")
    assert loaded.splits == dataset.splits
    for a, b in zip(dataset.volumes, loaded.volumes):
        assert a.id == b.id
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.annotations, b.annotations)


def test_dataset_bytes_are_reproducible(tmp_path):
    spec = small_spec()
    save_dataset(generate_dataset(spec), tmp_path / "a", spec)
    save_dataset(generate_dataset(spec), tmp_path / "b", spec)
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert len(files) == 1 + 6 * (1 + 3)
    for rel in files:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_missing_dataset_manifest(tmp_path):
    with pytest.raises(VolumeFormatError):
        load_dataset(tmp_path)
