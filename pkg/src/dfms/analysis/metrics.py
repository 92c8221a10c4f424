"""
Evaluation kit: clone quality, generator class balance, the active-learning query
bound, and the CSV/plot outputs read by acceptance checks.

All predictions are argmax over class scores in evaluation mode; ``torch.argmax``
returns the first maximal index, which is the shared lowest-index tie-break.
"""

import math
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Literal, Optional, Sequence

import pandas as pd
import torch
from loguru import logger
from pydantic import BaseModel, Field, model_validator
from torch import nn

from dfms.analysis.visualizer import RunVisualizer
from dfms.core.errors import InvariantError
from dfms.data import dataset_tensors
from dfms.nets.builder import sample_latent

if TYPE_CHECKING:
    from dfms.attack.history import TrainingHistory

CURVES_CSV = "curves.csv"
HIST_CSV = "hist.csv"
SWEEP_CSV = "sweep.csv"


def _model_device(model: nn.Module) -> torch.device:
    return next(model.parameters()).device


def _as_module(model) -> nn.Module:
    # VictimModel wraps its network
    return model.network if hasattr(model, "network") else model


def predict_labels(model: nn.Module, images: torch.Tensor, batch_size: int = 512, device=None) -> torch.Tensor:
    """Argmax predictions of ``model`` in evaluation mode, restoring its previous mode."""
    model = _as_module(model)
    device = device or _model_device(model)
    was_training = model.training
    model.eval()
    preds: List[torch.Tensor] = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            scores = model(images[start:start + batch_size].to(device))
            preds.append(torch.argmax(scores, dim=1).cpu())
    model.train(was_training)
    return torch.cat(preds) if preds else torch.zeros(0, dtype=torch.long)


def clone_accuracy(model: nn.Module, dataset, batch_size: int = 512, device=None) -> float:
    """Fraction of test images whose argmax prediction equals the label.

    Args:
        model: Clone (or any classifier)
        dataset: ``TensorDataset`` or ``(images, labels)`` pair

    Raises:
        InvariantError: empty set or labels outside ``[0, K)``
    """
    images, labels = dataset_tensors(dataset)
    if len(labels) == 0:
        raise InvariantError("test set is empty")
    k = int(_as_module(model).spec.output_shape[0]) if hasattr(_as_module(model), "spec") else None
    if k is not None and (int(labels.min()) < 0 or int(labels.max()) >= k):
        raise InvariantError(f"test labels must lie in [0, {k})")
    preds = predict_labels(model, images, batch_size, device)
    return float((preds == labels.cpu()).double().mean())


def per_class_accuracy(model: nn.Module, dataset, batch_size: int = 512) -> pd.DataFrame:
    """Accuracy per true class (columns ``class``, ``count``, ``accuracy``)."""
    images, labels = dataset_tensors(dataset)
    if len(labels) == 0:
        raise InvariantError("test set is empty")
    preds = predict_labels(model, images, batch_size)
    frame = pd.DataFrame({"class": labels.numpy(), "correct": (preds == labels).numpy()})
    grouped = frame.groupby("class")["correct"].agg(["count", "mean"]).reset_index()
    return grouped.rename(columns={"mean": "accuracy"})


def agreement(clone: nn.Module, victim, probe: torch.Tensor, batch_size: int = 512) -> float:
    """Fraction of probe inputs on which clone and victim predict the same top-1 class."""
    clone_net, victim_net = _as_module(clone), _as_module(victim)
    if probe.shape[0] == 0:
        raise InvariantError("probe set is empty")
    for name, net in (("clone", clone_net), ("victim", victim_net)):
        expected = tuple(net.spec.input_shape)
        if tuple(probe.shape[1:]) != expected:
            raise InvariantError(f"probe shape {tuple(probe.shape[1:])} does not match {name} input {expected}")
    if tuple(clone_net.spec.output_shape) != tuple(victim_net.spec.output_shape):
        raise InvariantError(
            f"clone outputs {tuple(clone_net.spec.output_shape)}, victim {tuple(victim_net.spec.output_shape)}"
        )
    same = predict_labels(clone_net, probe, batch_size) == predict_labels(victim_net, probe, batch_size)
    return float(same.double().mean())


def normalized_entropy(counts: Sequence[int]) -> float:
    """Entropy of a count vector divided by ``log K``; 0 for one class, 1 for exact uniformity."""
    counts_t = torch.as_tensor(list(counts), dtype=torch.float64)
    if counts_t.numel() == 0 or bool((counts_t < 0).any()):
        raise InvariantError("counts must be a non-empty vector of non-negative integers")
    n = counts_t.sum()
    if n <= 0:
        raise InvariantError("counts must not all be zero")
    if counts_t.numel() == 1:
        return 0.0
    p = counts_t / n
    entropy = -torch.xlogy(p, p).sum()
    return max(0.0, float(entropy / math.log(counts_t.numel())))


class ClassHistogram(BaseModel):
    """How labels of generated samples spread over the classes."""

    counts: List[int]
    source: Literal["victim", "clone"]
    n: int

    @model_validator(mode="after")
    def check_total(self) -> "ClassHistogram":
        if sum(self.counts) != self.n:
            raise ValueError(f"counts sum to {sum(self.counts)}, expected n={self.n}")
        return self

    @property
    def normalized_entropy(self) -> float:
        return normalized_entropy(self.counts)


def class_histogram(
    generator: nn.Module,
    labeler,
    n: int,
    rng: torch.Generator,
    batch_size: int = 256,
    phase: str = "histogram",
) -> ClassHistogram:
    """Label ``n`` generated samples and count them per class.

    Args:
        generator: Generator network (its spec gives the latent dimension)
        labeler: A clone network (free) or a victim endpoint with ``hard_label_query``
            (charged to ``phase``)
        n: Number of samples
        rng: Latent sampling generator
    """
    if n <= 0:
        raise InvariantError(f"n must be positive, got {n}")
    latent_dim = int(generator.spec.input_shape[0])
    device = _model_device(generator)
    is_victim = hasattr(labeler, "hard_label_query")
    num_classes = int(labeler.num_classes) if is_victim else int(_as_module(labeler).spec.output_shape[0])

    was_training = generator.training
    generator.eval()
    counts = torch.zeros(num_classes, dtype=torch.long)
    with torch.no_grad():
        for start in range(0, n, batch_size):
            b = min(batch_size, n - start)
            images = generator(sample_latent(b, latent_dim, rng, device)).cpu()
            labels = labeler.hard_label_query(images, phase) if is_victim else predict_labels(labeler, images)
            counts += torch.bincount(labels, minlength=num_classes)
    generator.train(was_training)
    return ClassHistogram(counts=counts.tolist(), source="victim" if is_victim else "clone", n=n)


class QueryBoundParams(BaseModel):
    """Inputs of the noisy-label active-learning query bound."""

    q: float = Field(ge=1)
    delta: float = Field(gt=0, lt=1)
    rho: float = Field(ge=0, lt=0.5)


def query_bound(params: QueryBoundParams) -> float:
    """``8 / (1 - 2 rho)^2 * q * ln(q / delta)``."""
    return 8.0 / (1.0 - 2.0 * params.rho) ** 2 * params.q * math.log(params.q / params.delta)


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def emit_curves(
    history: "TrainingHistory",
    out_dir: Path,
    sweep: Optional[pd.DataFrame] = None,
    render_plots: bool = True,
) -> Dict[str, Path]:
    """Write ``curves.csv`` (queries_used, clone_accuracy), ``hist.csv`` (class, count)
    and, given a sweep table, ``sweep.csv``; render the matching plots.

    Returns:
        Mapping from output name to written path
    """
    if len(history) == 0:
        raise InvariantError("history is empty")
    out_dir = Path(out_dir)
    outputs: Dict[str, Path] = {}

    curves = history.accuracy_curve()
    outputs["curves"] = write_csv(curves, out_dir / CURVES_CSV)

    hist_counts = history.last_histogram()
    hist = None
    if hist_counts is not None:
        hist = pd.DataFrame({"class": range(len(hist_counts)), "count": hist_counts})
        outputs["hist"] = write_csv(hist, out_dir / HIST_CSV)
    if sweep is not None:
        outputs["sweep"] = write_csv(sweep, out_dir / SWEEP_CSV)

    if render_plots:
        try:
            viz = RunVisualizer(output_dir=out_dir)
            if len(curves):
                outputs["curves_plot"] = viz.create_accuracy_curve(curves)
            if hist is not None:
                outputs["hist_plot"] = viz.create_class_histogram(hist)
            if sweep is not None and len(sweep.columns) >= 2:
                outputs["sweep_plot"] = viz.create_sweep_chart(sweep)
            outputs["loss_plot"] = viz.create_loss_chart(history.to_frame())
        except Exception as e:
            logger.error(f"Error rendering plots: {e}")
    return outputs
