"""
Supervised training of the victim classifier.

SGD with momentum and cosine annealing over an epoch cap; training stops as soon as
held-out accuracy reaches the target. If the cap is hit first, the best epoch is kept
and the model is flagged ``below_target``.
"""

import copy
from typing import Optional, Union

import torch
from loguru import logger
from pydantic import BaseModel, Field
from torch.utils.data import TensorDataset
from tqdm import tqdm

from dfms.analysis.metrics import clone_accuracy
from dfms.core.errors import InvariantError
from dfms.data import dataset_tensors
from dfms.losses import clone_ce_loss
from dfms.nets.builder import build_network
from dfms.nets.spec import NetworkSpec
from dfms.victim.oracle import VictimModel


class VictimTrainConfig(BaseModel):
    """Optimizer settings for victim training."""

    epochs: int = Field(30, ge=1)
    batch_size: int = Field(128, ge=1)
    lr: float = Field(0.1, gt=0)
    momentum: float = Field(0.9, ge=0)
    weight_decay: float = Field(5e-4, ge=0)
    holdout_fraction: float = Field(0.1, gt=0, lt=1)
    hflip: bool = False
    seed: int = 0


def train_victim(
    dataset: TensorDataset,
    spec: NetworkSpec,
    hyper: Optional[VictimTrainConfig] = None,
    target_accuracy: float = 0.95,
    test_set: Optional[TensorDataset] = None,
    device: Union[str, torch.device] = "cpu",
) -> VictimModel:
    """Train a victim until its held-out accuracy reaches ``target_accuracy``.

    Args:
        dataset: Labeled training images
        spec: Victim architecture (role ``victim``)
        hyper: Optimizer settings; defaults when None
        target_accuracy: Accuracy to stop at, in [0, 1]; 0 returns the untrained model
        test_set: Held-out set; when None, ``holdout_fraction`` of ``dataset`` is split off
        device: Training device

    Returns:
        The trained victim; ``flags`` holds ``untrained`` or ``below_target`` when
        the target was not reached by training
    """
    hyper = hyper or VictimTrainConfig()
    images, labels = dataset_tensors(dataset)
    if len(labels) == 0:
        raise InvariantError("victim training dataset is empty")
    if not 0.0 <= target_accuracy <= 1.0:
        raise InvariantError(f"target_accuracy must lie in [0, 1], got {target_accuracy}")

    num_classes = int(spec.output_shape[0])
    input_shape = tuple(spec.input_shape)
    gen = torch.Generator().manual_seed(hyper.seed)
    network = build_network(spec, gen).to(device)

    if target_accuracy == 0.0:
        logger.warning("Target accuracy 0: returning the untrained victim")
        return VictimModel(network.cpu(), num_classes, input_shape, 0.0, flags=["untrained"])

    if test_set is not None:
        test_images, test_labels = dataset_tensors(test_set)
    else:
        perm = torch.randperm(len(labels), generator=gen)
        n_hold = max(1, int(round(len(labels) * hyper.holdout_fraction)))
        if n_hold >= len(labels):
            raise InvariantError("dataset too small to split off a held-out set")
        test_images, test_labels = images[perm[:n_hold]], labels[perm[:n_hold]]
        images, labels = images[perm[n_hold:]], labels[perm[n_hold:]]

    optimizer = torch.optim.SGD(
        network.parameters(), lr=hyper.lr, momentum=hyper.momentum, weight_decay=hyper.weight_decay
    )
    steps_per_epoch = -(-len(labels) // hyper.batch_size)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=hyper.epochs * steps_per_epoch)

    best_accuracy, best_state = -1.0, None
    pbar = tqdm(range(hyper.epochs), ncols=80, desc="victim", postfix="loss: *.****; acc: *.****")
    for epoch in pbar:
        network.train()
        perm = torch.randperm(len(labels), generator=gen)
        losses = []
        for start in range(0, len(labels), hyper.batch_size):
            idx = perm[start:start + hyper.batch_size]
            x, y = images[idx], labels[idx]
            if hyper.hflip:
                flip = torch.rand(len(idx), generator=gen) < 0.5
                x = torch.where(flip[:, None, None, None], x.flip(-1), x)
            loss = clone_ce_loss(network(x.to(device)), y.to(device))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            losses.append(loss.item())

        accuracy = clone_accuracy(network, (test_images, test_labels), device=device)
        pbar.postfix = f"loss: {sum(losses) / len(losses):.4f}; acc: {accuracy:.4f}"
        logger.debug(f"Victim epoch {epoch + 1}/{hyper.epochs}: held-out accuracy {accuracy:.4f}")
        if accuracy > best_accuracy:
            best_accuracy, best_state = accuracy, copy.deepcopy(network.state_dict())
        if accuracy >= target_accuracy:
            logger.info(f"Victim reached {accuracy:.4f} >= {target_accuracy} after {epoch + 1} epochs")
            break

    flags = []
    if best_accuracy < target_accuracy:
        logger.warning(
            f"Epoch cap {hyper.epochs} reached at {best_accuracy:.4f}, below target {target_accuracy}; "
            "keeping the best epoch"
        )
        flags.append("below_target")
    network.load_state_dict(best_state)
    return VictimModel(network.cpu(), num_classes, input_shape, best_accuracy, flags=flags)
