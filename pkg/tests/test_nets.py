"""
Tests for network specs, construction and storage.
"""

import pytest
import torch

from dfms.core.errors import CheckpointError, InvariantError
from dfms.nets import (
    CLASSIFIER_PLANS,
    LayerSpec,
    NetworkSpec,
    build_network,
    classifier_spec,
    discriminator_spec,
    generator_spec,
    infer_shapes,
    load_network,
    sample_latent,
    save_network,
)


@pytest.mark.parametrize("image_size", [8, 16, 32])
def test_generator_and_discriminator_shapes(image_size):
    g = build_network(generator_spec(latent_dim=10, channels=3, image_size=image_size, width=8), 0)
    d = build_network(discriminator_spec(channels=3, image_size=image_size, width=8), 0)
    z = sample_latent(4, 10, torch.Generator().manual_seed(0))
    images = g(z)
    assert images.shape == (4, 3, image_size, image_size)
    assert images.min() >= -1 and images.max() <= 1
    scores = d(images)
    assert scores.shape[0] == 4
    assert bool(((scores > 0) & (scores < 1)).all())


@pytest.mark.parametrize("arch", sorted(CLASSIFIER_PLANS))
def test_classifier_plans_at_32(arch):
    net = build_network(classifier_spec(arch, 3, 10, 32), 0)
    assert net(torch.zeros((2, 3, 32, 32))).shape == (2, 10)


def test_infer_shapes_matches_declared_output():
    spec = classifier_spec("cnn2", 1, 4, 8)
    assert infer_shapes(spec)[-1] == (4,)


def test_bad_image_size_rejected():
    with pytest.raises(InvariantError):
        generator_spec(image_size=12)


def test_role_output_activation_enforced():
    with pytest.raises(ValueError):
        NetworkSpec(
            role="generator",
            input_shape=(4,),
            output_shape=(4,),
            layers=[LayerSpec(kind="linear", out=4)],
        )


def test_unknown_architecture():
    with pytest.raises(InvariantError):
        classifier_spec("vgg99")


def test_same_seed_same_parameters():
    spec = classifier_spec("cnn2", 1, 4, 8)
    a, b, c = build_network(spec, 3), build_network(spec, 3), build_network(spec, 4)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)
    assert any(not torch.equal(pa, pc) for pa, pc in zip(a.parameters(), c.parameters()))


def test_build_from_generator_advances_it():
    spec = classifier_spec("cnn2", 1, 4, 8)
    gen = torch.Generator().manual_seed(0)
    a, b = build_network(spec, gen), build_network(spec, gen)
    assert any(not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters()))


def test_build_leaves_global_rng_alone():
    torch.manual_seed(0)
    expected = torch.rand(3)
    torch.manual_seed(0)
    build_network(classifier_spec("cnn2", 1, 4, 8), 99)
    assert torch.equal(torch.rand(3), expected)


def test_sample_latent():
    z1 = sample_latent(5, 7, torch.Generator().manual_seed(1))
    z2 = sample_latent(5, 7, torch.Generator().manual_seed(1))
    assert z1.shape == (5, 7)
    assert torch.equal(z1, z2)
    with pytest.raises(InvariantError):
        sample_latent(0, 7, torch.Generator())


def test_spec_text_roundtrip():
    spec = classifier_spec("resnet8", 3, 10, 32)
    assert NetworkSpec.from_text(spec.to_text()) == spec


def test_save_and_load_network(tmp_path):
    net = build_network(generator_spec(8, 1, 8, 8), 0)
    save_network(tmp_path / "g.pt", net)
    loaded = load_network(tmp_path / "g.pt")
    assert loaded.spec == net.spec
    net.eval()
    loaded.eval()
    z = sample_latent(2, 8, torch.Generator().manual_seed(0))
    assert torch.equal(net(z), loaded(z))


def test_load_network_rejects_bad_version(tmp_path):
    torch.save({"format_version": 99}, tmp_path / "bad.pt")
    with pytest.raises(CheckpointError):
        load_network(tmp_path / "bad.pt")


@pytest.mark.parametrize("value", [-6.0, 6.0])
def test_generator_range_for_extreme_latents(value):
    g = build_network(generator_spec(latent_dim=10, channels=1, image_size=16, width=8), 0)
    images = g(torch.full((4, 10), value))
    assert torch.isfinite(images).all()
    assert images.min() >= -1 and images.max() <= 1


@pytest.mark.parametrize(
    "spec",
    [
        generator_spec(latent_dim=10, channels=3, image_size=16, width=8),
        discriminator_spec(channels=3, image_size=16, width=8),
        classifier_spec("cnn2", 3, 10, 16),
    ],
    ids=["generator", "discriminator", "classifier"],
)
def test_gradients_are_finite_after_one_backward(spec):
    net = build_network(spec, 0)
    net.train()
    if spec.role == "generator":
        x = sample_latent(4, 10, torch.Generator().manual_seed(1))
    else:
        x = torch.rand((4, 3, 16, 16), generator=torch.Generator().manual_seed(1)) * 2 - 1
    net(x).sum().backward()
    for name, param in net.named_parameters():
        assert param.grad is not None, name
        assert torch.isfinite(param.grad).all(), name


def test_eval_forward_is_deterministic():
    net = build_network(classifier_spec("cnn4", 3, 10, 32), 0)
    net.eval()
    x = torch.rand((3, 3, 32, 32), generator=torch.Generator().manual_seed(2))
    with torch.no_grad():
        first = net(x)
        second = net(x)
    assert torch.equal(first, second)
