"""Tests for Otsu thresholding, binarization, argmax labels and RoO maps"""
import numpy as np
import pytest

from common.errors import DegenerateHistogramError, InvalidArgumentError
from segmentation import (
    argmax_labels,
    between_class_variance,
    binarize,
    otsu_threshold,
    rate_of_occurrence,
    segment_samples,
)


# === Otsu ===

def test_bimodal_map_is_separated():
    p = np.array([0.1] * 8 + [0.9] * 8).reshape(4, 4)
    tau = otsu_threshold(p)
    assert 0.1 < tau <= 0.9
    np.testing.assert_array_equal(binarize(p, tau), (p > 0.5).astype(np.uint8))


def test_symmetric_two_delta_gives_one_half():
    p = np.array([0.25] * 10 + [0.75] * 10)
    assert otsu_threshold(p) == pytest.approx(0.5, abs=1e-12)


def test_agrees_with_exhaustive_edge_search(rng):
    for _ in range(20):
        p = np.clip(np.concatenate([rng.normal(0.3, 0.08, 40), rng.normal(0.7, 0.1, 25)]), 0, 1)
        bins = 64
        hist, edges = np.histogram(p, bins=bins, range=(0, 1))
        centers = (np.arange(bins) + 0.5) / bins
        best_score, best_edges = -np.inf, []
        for k in range(1, bins):
            lo, hi = hist[:k], hist[k:]
            if lo.sum() == 0 or hi.sum() == 0:
                continue
            w0, w1 = lo.sum() / hist.sum(), hi.sum() / hist.sum()
            m0 = np.dot(lo, centers[:k]) / lo.sum()
            m1 = np.dot(hi, centers[k:]) / hi.sum()
            score = w0 * w1 * (m0 - m1) ** 2
            if score > best_score + 1e-15:
                best_score, best_edges = score, [k]
            elif abs(score - best_score) <= 1e-15:
                best_edges.append(k)
        tau = otsu_threshold(p, bins=bins)
        assert tau in [edges[k] for k in best_edges]
        np.testing.assert_array_equal(p >= tau, p >= edges[best_edges[0]])


def test_threshold_is_a_bin_edge_for_any_bin_count():
    p = np.array([0.3] * 8 + [0.9] * 8)
    for bins in (3, 7, 10, 100, 255):
        tau = otsu_threshold(p, bins=bins)
        assert 0.3 < tau <= 0.9
        assert tau * bins == pytest.approx(round(tau * bins), abs=1e-9)
        np.testing.assert_array_equal(binarize(p, tau), p > 0.5)


def test_tied_edges_resolve_toward_the_lower_threshold():
    # bin 2 is empty, so edges 0.5 and 0.75 split the voxels identically
    p = np.array([0.25] * 6 + [0.75] * 6)
    variance = between_class_variance(np.histogram(p, bins=4, range=(0, 1))[0])
    assert variance[1] == variance[2] == variance.max()
    assert otsu_threshold(p, bins=4) == 0.5


def test_variance_curve_marks_empty_sides():
    hist = np.array([0, 3, 0, 5])
    variance = between_class_variance(hist)
    assert variance[0] == -np.inf
    assert variance[1] == variance[2] > 0


def test_constant_map_is_degenerate():
    with pytest.raises(DegenerateHistogramError):
        otsu_threshold(np.full((4, 4), 0.3))


def test_otsu_argument_checks():
    with pytest.raises(InvalidArgumentError):
        otsu_threshold(np.array([0.1, 0.9]), bins=1)
    with pytest.raises(InvalidArgumentError):
        otsu_threshold(np.array([0.1, 1.5]))


def test_degenerate_samples_fall_back_to_half():
    samples = np.stack([np.full((2, 2), 0.7), np.array([[0.1, 0.9], [0.2, 0.8]])])
    masks = segment_samples(samples)
    np.testing.assert_array_equal(masks[0], 1)
    np.testing.assert_array_equal(masks[1], [[0, 1], [0, 1]])


# === Binarize and argmax ===

def test_binarize_is_inclusive():
    p = np.array([0.2, 0.5, 0.7])
    np.testing.assert_array_equal(binarize(p, 0.5), [0, 1, 1])
    np.testing.assert_array_equal(binarize(np.zeros((3, 3)), 0.5), 0)


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.1])
def test_binarize_threshold_range(tau):
    with pytest.raises(InvalidArgumentError):
        binarize(np.array([0.5]), tau)


def test_argmax_tie_goes_to_background():
    np.testing.assert_array_equal(argmax_labels(np.zeros((2, 3, 3))), 0)


def test_argmax_matches_half_threshold(rng):
    logits = rng.normal(size=(2, 8, 8)) * 3
    p = 1.0 / (1.0 + np.exp(-(logits[1] - logits[0])))
    np.testing.assert_array_equal(argmax_labels(logits), binarize(p, 0.5))


def test_argmax_is_monotone(rng):
    logits = rng.normal(size=(2, 6, 6))
    raised = logits.copy()
    raised[1] += 0.7
    before, after = argmax_labels(logits), argmax_labels(raised)
    assert np.all(after >= before)


def test_argmax_needs_two_channels():
    with pytest.raises(InvalidArgumentError):
        argmax_labels(np.zeros((3, 2, 2)))


# === Rate of occurrence ===

def test_rate_of_occurrence_values():
    a = np.array([[1, 0], [1, 1]])
    b = np.array([[1, 0], [0, 1]])
    np.testing.assert_allclose(rate_of_occurrence([a, b]), [[1.0, 0.0], [0.5, 1.0]])
    np.testing.assert_array_equal(rate_of_occurrence([a]), a)


def test_rate_of_occurrence_checks():
    with pytest.raises(InvalidArgumentError):
        rate_of_occurrence([])
    with pytest.raises(InvalidArgumentError):
        rate_of_occurrence([np.zeros((2, 2)), np.zeros((3, 3))])
