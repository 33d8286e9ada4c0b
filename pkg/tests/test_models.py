"""Tests for the U-Net backbone, cVAE losses, baselines and checkpoints"""
import numpy as np
import pytest

from common.errors import CheckpointError, InsufficientAnnotationsError, InvalidArgumentError
from engine import Tensor, backward, grad_check, no_grad, ops
from gaussian import DiagonalGaussian, kl_diag
from models import (
    LatentSpec,
    LossKind,
    LossSpec,
    ModelKind,
    UNetConfig,
    build_model,
    expand_latent,
    load_model,
)
from models.checkpoint import load_checkpoint, save_checkpoint
from models.layers import ModelParams, ParamInitializer, conv_bound, linear_bound
from models.losses import cross_entropy_loss, focal_tversky_loss
from models import mcdo, prob_unet, ssn
from models.prob_unet import (
    head_logits,
    posterior_forward,
    prior_forward,
    segmentation_probability,
)
from models.pulaski import distribution_distance, draw_predictions, pulaski_loss
from models.unet import unet_forward
from transport import DiscreteMeasure, SinkhornConfig, hausdorff_divergence, sinkhorn_divergence

TINY = UNetConfig(depth=1, base_channels=2)
LATENT = LatentSpec(dim=2)
SOLVER = SinkhornConfig(epsilon=0.1, tol=1e-11, max_iters=50_000)


def tiny_batch(rng, b=1, r=3, size=4):
    images = Tensor(rng.normal(size=(b, 1, size, size)))
    annotations = (rng.random((b, r, size, size)) > 0.5).astype(float)
    return images, annotations


def zeroed(params: ModelParams, **overrides) -> None:
    arrays = {name: np.zeros_like(value) for name, value in params.to_arrays().items()}
    arrays.update({name: np.asarray(value, dtype=float) for name, value in overrides.items()})
    params.load_arrays(arrays)


# === Backbone and encoders ===

def test_unet_output_shape():
    cfg = UNetConfig()
    params = prob_unet.init_params(cfg, LatentSpec(), np.random.default_rng(0))
    with no_grad():
        out = unet_forward(Tensor(np.zeros((1, 1, 32, 32))), params, cfg)
    assert out.shape == (1, 8, 32, 32)


def test_zero_weights_give_zero_features(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    zeroed(params)
    out = unet_forward(Tensor(rng.normal(size=(2, 1, 4, 4))), params, TINY)
    np.testing.assert_array_equal(out.data, 0.0)


def test_extents_must_divide_depth(rng):
    params = prob_unet.init_params(UNetConfig(depth=3, base_channels=2), LATENT, rng)
    with pytest.raises(InvalidArgumentError, match="multiples of 8"):
        unet_forward(Tensor(np.zeros((1, 1, 12, 12))), params, UNetConfig(depth=3, base_channels=2))


def test_unet_kernel_gradient(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    name = "unet.dec0.conv2.weight"
    f = lambda w: ops.sum(unet_forward(x, params.substitute(name, w), TINY))
    assert grad_check(f, params[name]) < 1e-4


def test_zero_encoder_is_standard_normal(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    zeroed(params)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    prior = prior_forward(x, params, TINY)
    posterior = posterior_forward(x, np.ones((1, 4, 4)), params, TINY)
    for law in (prior, posterior):
        np.testing.assert_array_equal(law.mu.data, 0.0)
        np.testing.assert_array_equal(law.sigma.data, 1.0)
    assert prior_forward(x, prob_unet.init_params(TINY, LatentSpec(), rng), TINY).dim == 3


def test_posterior_rejects_non_binary_mask(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    with pytest.raises(InvalidArgumentError):
        posterior_forward(Tensor(np.zeros((1, 1, 4, 4))), np.full((1, 4, 4), 0.5), params, TINY)


def test_kl_gradient_reaches_encoder_weights(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    y = (rng.random((1, 4, 4)) > 0.5).astype(float)
    name = "posterior.mu.weight"

    def f(w):
        p = params.substitute(name, w)
        return ops.sum(kl_diag(posterior_forward(x, y, p, TINY), prior_forward(x, p, TINY)))

    assert grad_check(f, params[name]) < 1e-3


# === Latent injection and head ===

def test_expand_latent_values_and_gradient():
    z = Tensor([1.0, -2.0, 0.5], requires_grad=True)
    maps = expand_latent(z, (4, 4))
    assert maps.shape == (3, 4, 4)
    np.testing.assert_array_equal(maps.data[1], -2.0)
    backward(ops.sum(maps))
    np.testing.assert_array_equal(z.grad, [16.0, 16.0, 16.0])
    np.testing.assert_array_equal(expand_latent(Tensor(np.zeros(3)), (4, 4)).data, 0.0)


def test_zero_final_kernel_gives_bias_logits(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    arrays = params.to_arrays()
    arrays["head.out.weight"] = np.zeros_like(arrays["head.out.weight"])
    arrays["head.out.bias"] = np.array([0.3, -0.2])
    params.load_arrays(arrays)
    features = Tensor(rng.normal(size=(2, 2, 4, 4)))
    eta = head_logits(features, Tensor(rng.normal(size=(2, 2))), params, TINY)
    assert eta.shape == (2, 2, 4, 4)
    np.testing.assert_allclose(eta.data[:, 0], 0.3)
    np.testing.assert_allclose(eta.data[:, 1], -0.2)


def test_latent_changes_logits(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    features = Tensor(rng.normal(size=(1, 2, 4, 4)))
    a = head_logits(features, Tensor([[0.0, 0.0]]), params, TINY).data
    b = head_logits(features, Tensor([[1.0, -1.0]]), params, TINY).data
    assert np.max(np.abs(a - b)) > 0


def test_head_rejects_latent_count_mismatch(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    with pytest.raises(InvalidArgumentError):
        head_logits(Tensor(np.zeros((2, 2, 4, 4))), Tensor(np.zeros((3, 2))), params, TINY)


def test_probability_matches_two_class_softmax(rng):
    logits = Tensor(rng.normal(size=(2, 2, 4, 4)) * 5)
    p = segmentation_probability(logits).data
    np.testing.assert_allclose(p, ops.softmax_over_channels(logits).data[:, 1], atol=1e-12)
    np.testing.assert_array_equal(segmentation_probability(Tensor(np.zeros((1, 2, 2, 2)))).data, 0.5)
    saturated = Tensor(np.array([[[[-40.0]], [[40.0]]]]))
    assert segmentation_probability(saturated).item() == pytest.approx(1.0)


def test_probability_rejects_multiclass():
    with pytest.raises(InvalidArgumentError):
        segmentation_probability(Tensor(np.zeros((1, 3, 2, 2))))


# === Initialisation ===

def test_init_bounds():
    assert conv_bound(8, (3, 3)) == pytest.approx(0.11785, abs=1e-5)
    assert linear_bound(3) == pytest.approx(1 / np.sqrt(3))


def test_init_draws_respect_bounds():
    params = ModelParams()
    init = ParamInitializer(params, np.random.default_rng(0), spatial_dims=2)
    init.conv("wide", 8, 1400)
    init.linear("lin", 3, 40_000)
    assert params["wide.weight"].size > 100_000
    assert np.max(np.abs(params["wide.weight"].data)) <= conv_bound(8, (3, 3))
    assert np.max(np.abs(params["lin.weight"].data)) <= linear_bound(3)
    assert np.max(np.abs(params["lin.weight"].data)) > 0.99 * linear_bound(3)


# === Pixelwise losses ===

def test_cross_entropy_values(rng):
    y = (rng.random((3, 4)) > 0.5).astype(float)
    assert cross_entropy_loss(Tensor(np.full((3, 4), 0.5)), y).item() == pytest.approx(np.log(2))
    assert cross_entropy_loss(Tensor(y), y).item() == pytest.approx(0.0, abs=1e-6)

    p = rng.random((3, 4)) * 0.9 + 0.05
    expected = 0.0
    for i in range(3):
        for j in range(4):
            expected -= y[i, j] * np.log(p[i, j]) + (1 - y[i, j]) * np.log(1 - p[i, j])
    assert cross_entropy_loss(Tensor(p), y).item() == pytest.approx(expected / 12, rel=1e-12)


def test_cross_entropy_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        cross_entropy_loss(Tensor(np.full((2, 2), 0.5)), np.zeros((2, 3)))


def test_focal_tversky_values():
    y = np.zeros((100, 100))
    y[:50] = 1.0
    assert focal_tversky_loss(Tensor(y), y).item() == pytest.approx(0.0, abs=1e-12)
    assert focal_tversky_loss(Tensor(1.0 - y), y).item() == pytest.approx(1.0, abs=1e-3)

    p = np.array([0.9, 0.2, 0.6, 0.1])
    m = np.array([1.0, 1.0, 0.0, 0.0])
    tp = 0.9 + 0.2
    fn = 0.1 + 0.8
    fp = 0.6 + 0.1
    dice = 1 - (tp + 1) / (tp + 0.5 * fn + 0.5 * fp + 1)
    assert focal_tversky_loss(Tensor(p), m, (0.5, 0.5, 1.0)).item() == pytest.approx(dice, rel=1e-12)


# === Probabilistic U-Net ===

def test_probunet_matches_hand_composition(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(2, 1, 4, 4)))
    y = (rng.random((2, 4, 4)) > 0.5).astype(float)
    spec = LossSpec(kind=LossKind.CE, beta=0.7, m_samples=1)

    loss = prob_unet.probunet_loss(x, y, params, TINY, spec, np.random.default_rng(3)).item()

    draws = np.random.default_rng(3)
    posterior = posterior_forward(x, y, params, TINY)
    prior = prior_forward(x, params, TINY)
    z = posterior.mu + posterior.sigma * draws.standard_normal(posterior.mu.shape)
    prob = segmentation_probability(head_logits(unet_forward(x, params, TINY), z, params, TINY))
    expected = cross_entropy_loss(prob, y).item() + 0.7 * np.mean(kl_diag(posterior, prior).data)
    assert loss == pytest.approx(expected, rel=1e-12)


def test_probunet_perfect_prediction_is_near_zero(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    zeroed(params, **{"head.out.bias": [-20.0, 20.0]})
    spec = LossSpec(kind=LossKind.CE, beta=0.0, m_samples=1)
    loss = prob_unet.probunet_loss(Tensor(np.zeros((1, 1, 4, 4))), np.ones((1, 4, 4)), params, TINY, spec, rng)
    assert loss.item() == pytest.approx(0.0, abs=1e-6)


def test_probunet_rejects_distributional_kind(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    with pytest.raises(InvalidArgumentError):
        prob_unet.probunet_loss(Tensor(np.zeros((1, 1, 4, 4))), np.ones((1, 4, 4)), params, TINY,
                                LossSpec(kind=LossKind.SINKHORN), rng)


def test_prior_samples_are_probabilities_and_reproducible(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(2, 1, 4, 4)))
    a = prob_unet.sample_from_prior(x, params, TINY, 5, np.random.default_rng(9))
    b = prob_unet.sample_from_prior(x, params, TINY, 5, np.random.default_rng(9))
    assert a.shape == (5, 2, 4, 4)
    assert np.all((a > 0) & (a < 1))
    np.testing.assert_array_equal(a, b)


def test_collapsed_prior_gives_identical_samples(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    arrays = params.to_arrays()
    arrays["prior.log_sigma.weight"] = np.zeros_like(arrays["prior.log_sigma.weight"])
    arrays["prior.log_sigma.bias"] = np.full(2, -10.0)
    params.load_arrays(arrays)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    maps = prob_unet.sample_from_prior(x, params, TINY, 4, rng)
    np.testing.assert_allclose(maps, np.broadcast_to(maps[0], maps.shape), atol=1e-3)
    np.testing.assert_allclose(maps[0], prob_unet.most_probable_map(x, params, TINY), atol=1e-3)


def test_most_probable_map_is_deterministic(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    np.testing.assert_array_equal(prob_unet.most_probable_map(x, params, TINY),
                                  prob_unet.most_probable_map(x, params, TINY))


# === Distributional loss ===

def test_pulaski_loss_matches_hand_composition(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    ys = (rng.random((2, 4, 4)) > 0.5).astype(float)
    spec = LossSpec(kind=LossKind.SINKHORN, beta=0.5, m_samples=2)

    loss = pulaski_loss(x, ys, params, TINY, spec, SOLVER, np.random.default_rng(5)).item()

    draws = np.random.default_rng(5)
    chosen = draws.integers(0, 2, size=2)
    images = ops.broadcast_to(x, (2, 1, 4, 4))
    posterior = posterior_forward(images, ys[chosen], params, TINY)
    prior = prior_forward(x, params, TINY)
    z = posterior.mu + posterior.sigma * draws.standard_normal((2, 2))
    features = ops.broadcast_to(unet_forward(x, params, TINY), (2, 2, 4, 4))
    prob = segmentation_probability(head_logits(features, z, params, TINY))
    distance = sinkhorn_divergence(
        DiscreteMeasure.uniform(prob.data.reshape(2, 16)),
        DiscreteMeasure.uniform(ys.reshape(2, 16)),
        SOLVER,
    ).item()
    kl = np.mean([
        kl_diag(posterior.row(m), DiagonalGaussian(prior.mu, prior.sigma)).item() for m in range(2)
    ])
    assert loss == pytest.approx(distance + 0.5 * kl, rel=1e-9)


def test_loss_splits_into_distance_and_kl(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    ys = (rng.random((3, 4, 4)) > 0.5).astype(float)
    bare_spec = LossSpec(kind=LossKind.HAUSDORFF, beta=0.0, m_samples=3, conditioning="fixed")
    full_spec = LossSpec(kind=LossKind.HAUSDORFF, beta=2.0, m_samples=3, conditioning="fixed")

    bare = pulaski_loss(x, ys, params, TINY, bare_spec, SOLVER, np.random.default_rng(1)).item()
    full = pulaski_loss(x, ys, params, TINY, full_spec, SOLVER, np.random.default_rng(1)).item()
    _, posterior, prior = draw_predictions(x, ys, params, TINY, full_spec, np.random.default_rng(1))
    assert full - bare == pytest.approx(2.0 * np.mean(kl_diag(posterior, prior).data), rel=1e-9)


@pytest.mark.parametrize("kind", [LossKind.SINKHORN, LossKind.HAUSDORFF])
def test_identical_clouds_have_zero_distance(kind, rng):
    ys = (rng.random((3, 16)) > 0.5).astype(float)
    d = distribution_distance(Tensor(ys), ys, LossSpec(kind=kind), SOLVER)
    assert abs(d.item()) <= 1e-6


@pytest.mark.parametrize("kind", [LossKind.SINKHORN, LossKind.HAUSDORFF, LossKind.FRECHET])
def test_distance_ignores_annotation_order(kind, rng):
    predictions = Tensor(rng.random((4, 16)))
    ys = (rng.random((3, 16)) > 0.5).astype(float)
    spec = LossSpec(kind=kind)
    forward = distribution_distance(predictions, ys, spec, SOLVER).item()
    reverse = distribution_distance(predictions, ys[::-1].copy(), spec, SOLVER).item()
    assert forward == pytest.approx(reverse, rel=1e-8, abs=1e-10)


def test_hausdorff_distance_uses_divergence(rng):
    predictions = rng.random((3, 16))
    ys = (rng.random((2, 16)) > 0.5).astype(float)
    d = distribution_distance(Tensor(predictions), ys, LossSpec(kind=LossKind.HAUSDORFF), SOLVER).item()
    expected = hausdorff_divergence(DiscreteMeasure.uniform(predictions), DiscreteMeasure.uniform(ys), SOLVER).item()
    assert d == pytest.approx(expected, rel=1e-12)


def test_pulaski_needs_two_annotations(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    with pytest.raises(InsufficientAnnotationsError):
        pulaski_loss(Tensor(np.zeros((1, 1, 4, 4))), np.ones((1, 4, 4)), params, TINY,
                     LossSpec(kind=LossKind.SINKHORN), SOLVER, rng)


@pytest.mark.parametrize("kind", [LossKind.SINKHORN, LossKind.HAUSDORFF, LossKind.FRECHET])
@pytest.mark.parametrize("name", ["head.out.weight", "posterior.mu.weight"])
def test_pulaski_loss_gradients(kind, name, rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    ys = (rng.random((3, 4, 4)) > 0.5).astype(float)
    spec = LossSpec(kind=kind, m_samples=3, frechet_exact_value=False)

    def f(w):
        return pulaski_loss(x, ys, params.substitute(name, w), TINY, spec, SOLVER, np.random.default_rng(11))

    assert grad_check(f, params[name], h=1e-6) < 1e-3


@pytest.mark.parametrize("kind", [LossKind.CE, LossKind.FTL])
def test_probunet_loss_gradients(kind, rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    x = Tensor(rng.normal(size=(2, 1, 4, 4)))
    y = (rng.random((2, 4, 4)) > 0.5).astype(float)
    spec = LossSpec(kind=kind, m_samples=2)
    name = "head.hidden0.weight"

    def f(w):
        return prob_unet.probunet_loss(x, y, params.substitute(name, w), TINY, spec, np.random.default_rng(2))

    assert grad_check(f, params[name]) < 1e-3


# === SSN ===

def test_ssn_zero_heads(rng):
    params = ssn.init_params(TINY, 3, rng)
    zeroed(params)
    law = ssn.ssn_forward(Tensor(rng.normal(size=(1, 1, 4, 4))), params, TINY, 3)
    assert law.mu.shape == (1, 32)
    assert law.factor.shape == (1, 32, 3)
    np.testing.assert_array_equal(law.mu.data, 0.0)
    np.testing.assert_array_equal(law.factor.data, 0.0)
    np.testing.assert_allclose(law.diag.data, np.log(2.0) + ssn.DIAG_FLOOR)


def test_ssn_single_sample_is_pixel_sum_cross_entropy(rng):
    params = ssn.init_params(TINY, 2, rng)
    x = Tensor(rng.normal(size=(2, 1, 4, 4)))
    y = (rng.random((2, 4, 4)) > 0.5).astype(float)
    loss = ssn.ssn_loss(x, y, params, TINY, 2, 1, np.random.default_rng(4)).item()

    eta = ssn.ssn_forward(x, params, TINY, 2).sample(np.random.default_rng(4)).data.reshape(2, 2, 4, 4)
    p = 1.0 / (1.0 + np.exp(-(eta[:, 1] - eta[:, 0])))
    per_image = -np.sum(y * np.log(p) + (1 - y) * np.log(1 - p), axis=(1, 2))
    assert loss == pytest.approx(per_image.mean(), rel=1e-10)


def test_ssn_matches_direct_product(rng):
    params = ssn.init_params(TINY, 2, rng)
    x = Tensor(rng.normal(size=(1, 1, 2, 2)))
    y = np.array([[[1.0, 0.0], [0.0, 1.0]]])
    loss = ssn.ssn_loss(x, y, params, TINY, 2, 3, np.random.default_rng(8)).item()

    law = ssn.ssn_forward(x, params, TINY, 2)
    draws = np.random.default_rng(8)
    likelihoods = []
    for _ in range(3):
        eta = law.sample(draws).data.reshape(1, 2, 2, 2)
        p = 1.0 / (1.0 + np.exp(-(eta[0, 1] - eta[0, 0])))
        likelihoods.append(np.prod(np.where(y[0] == 1, p, 1 - p)))
    assert loss == pytest.approx(-np.log(np.mean(likelihoods)), rel=1e-10)


def test_ssn_perfect_logits_near_zero(rng):
    params = ssn.init_params(TINY, 2, rng)
    zeroed(params, **{"ssn.mu.bias": [-20.0, 20.0], "ssn.diag.bias": [-30.0, -30.0]})
    loss = ssn.ssn_loss(Tensor(np.zeros((1, 1, 4, 4))), np.ones((1, 4, 4)), params, TINY, 2, 2, rng)
    assert loss.item() == pytest.approx(0.0, abs=1e-6)


def test_ssn_loss_gradient(rng):
    params = ssn.init_params(TINY, 2, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    y = (rng.random((1, 4, 4)) > 0.5).astype(float)
    name = "ssn.factor.weight"
    f = lambda w: ssn.ssn_loss(x, y, params.substitute(name, w), TINY, 2, 3, np.random.default_rng(6))
    assert grad_check(f, params[name]) < 1e-3


# === MC-Dropout ===

def test_mcdo_sampling_is_seeded(rng):
    cfg = UNetConfig(depth=1, base_channels=4, dropout_rate=0.3)
    params = mcdo.init_params(cfg, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    a = mcdo.mcdo_sample(x, params, cfg, 0.3, 10, np.random.default_rng(1))
    b = mcdo.mcdo_sample(x, params, cfg, 0.3, 10, np.random.default_rng(1))
    assert a.shape == (10, 1, 4, 4)
    np.testing.assert_array_equal(a, b)
    assert np.max(a.var(axis=0)) > 0


def test_mcdo_vanishing_rate_gives_identical_maps(rng):
    params = mcdo.init_params(TINY, rng)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    maps = mcdo.mcdo_sample(x, params, TINY, 1e-12, 4, rng)
    np.testing.assert_allclose(maps, np.broadcast_to(maps[0], maps.shape), atol=1e-9)


@pytest.mark.parametrize("rate", [0.0, 1.0, -0.2])
def test_mcdo_rate_out_of_range(rate, rng):
    params = mcdo.init_params(TINY, rng)
    with pytest.raises(InvalidArgumentError):
        mcdo.mcdo_sample(Tensor(np.zeros((1, 1, 4, 4))), params, TINY, rate, 2, rng)


# === Model wrappers ===

@pytest.mark.parametrize("kind", list(ModelKind))
def test_every_family_trains_and_samples(kind, rng):
    model = build_model(kind, TINY, LATENT, LossSpec(m_samples=2, ssn_rank=2), SOLVER, rng)
    assert model.kind is kind
    assert model.loss_spec.kind is kind.default_loss
    images, annotations = tiny_batch(rng, b=2, r=3)

    loss = model.loss(images, annotations, np.random.default_rng(0))
    assert loss.shape == () and np.isfinite(loss.item())
    backward(loss, leaves=model.params.tensors())
    assert all(t.grad is not None for t in model.params.tensors())

    samples = model.sample(images, 3, np.random.default_rng(0))
    assert samples.shape == (3, 2, 4, 4)
    assert model.most_probable(images).shape == (2, 4, 4)


def test_mcdo_model_gets_default_rate(rng):
    model = build_model("mcdo", TINY, rng=rng)
    assert model.unet_cfg.dropout_rate == mcdo.DEFAULT_RATE


def test_unknown_model_name():
    with pytest.raises(InvalidArgumentError, match="unknown model"):
        build_model("unet-plus-plus")


# === Checkpoints ===

def test_checkpoint_round_trip(tmp_path, rng):
    model = build_model("pulaski-hausdorff", TINY, LATENT, LossSpec(beta=0.5), SOLVER, rng)
    path = model.save(tmp_path / "best.plsk", extra_meta={"epoch": 7})
    restored, meta = load_model(path)
    assert restored.kind is ModelKind.PULASKI_HAUSDORFF
    assert restored.loss_spec.beta == 0.5
    assert meta["epoch"] == 7
    for name, value in model.params.to_arrays().items():
        np.testing.assert_array_equal(restored.params[name].data, value)
    x = Tensor(rng.normal(size=(1, 1, 4, 4)))
    np.testing.assert_array_equal(restored.most_probable(x), model.most_probable(x))


def test_checkpoint_layout(tmp_path):
    path = save_checkpoint(tmp_path / "c.plsk", {"a": np.arange(3.0), "b": np.eye(2)}, {"k": 1})
    blob = path.read_bytes()
    assert blob[:5] == b"PLSK1"
    assert blob[-8:] == np.float64(1.0).tobytes()
    tensors, meta = load_checkpoint(path)
    assert list(tensors) == ["a", "b"]
    np.testing.assert_array_equal(tensors["b"], np.eye(2))
    assert meta == {"k": 1}


def test_corrupt_checkpoints_are_rejected(tmp_path):
    bad = tmp_path / "bad.plsk"
    bad.write_bytes(b"NOPE")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)
    good = save_checkpoint(tmp_path / "good.plsk", {"a": np.arange(4.0)}, {})
    truncated = tmp_path / "short.plsk"
    truncated.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(CheckpointError):
        load_checkpoint(truncated)


def test_loading_mismatched_parameters_fails(rng):
    params = prob_unet.init_params(TINY, LATENT, rng)
    arrays = params.to_arrays()
    arrays.pop("head.out.bias")
    with pytest.raises(CheckpointError):
        params.load_arrays(arrays)
