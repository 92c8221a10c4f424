"""
Generator, discriminator and classifier networks.
"""

from dfms.nets.builder import (
    PlanNetwork,
    build_network,
    init_weights,
    load_network,
    sample_latent,
    save_network,
)
from dfms.nets.spec import LayerSpec, NetworkSpec, infer_shapes
from dfms.nets.zoo import CLASSIFIER_PLANS, classifier_spec, discriminator_spec, generator_spec

__all__ = [
    "LayerSpec",
    "NetworkSpec",
    "infer_shapes",
    "PlanNetwork",
    "build_network",
    "init_weights",
    "sample_latent",
    "save_network",
    "load_network",
    "CLASSIFIER_PLANS",
    "classifier_spec",
    "discriminator_spec",
    "generator_spec",
]
