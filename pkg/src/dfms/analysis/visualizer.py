"""
Run Visualization Module

Renders the plots of an attack run: clone accuracy against queries, the class
histogram of generated samples, sweep results, loss traces and image grids.
Plots are cosmetic; the CSV files next to them are what checks read.
"""

from pathlib import Path
from typing import Dict, List, Optional, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns
import torch
from loguru import logger
from matplotlib.ticker import FuncFormatter
from torchvision.utils import make_grid

# Set Seaborn style
sns.set_style("darkgrid")
plt.rcParams["figure.figsize"] = (10, 6)
plt.rcParams["font.size"] = 12


class RunVisualizer:
    """A class for generating visualizations from run histories."""

    def __init__(self, output_dir: Union[str, Path]):
        """Initialize the run visualizer.

        Args:
            output_dir: Directory for saving visualizations
        """
        self.output_dir = Path(output_dir)

        # Create subdirectories
        self.curves_dir = self.output_dir / "curves"
        self.histograms_dir = self.output_dir / "histograms"
        self.samples_dir = self.output_dir / "samples"
        for directory in (self.curves_dir, self.histograms_dir, self.samples_dir):
            directory.mkdir(parents=True, exist_ok=True)

        # Configure color schemes
        self.color_schemes = {
            "primary": ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                        "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"],
            "deep": sns.color_palette("deep"),
            "colorblind": sns.color_palette("colorblind"),
        }

    def _query_formatter(self, x: float, pos) -> str:
        """Format axis ticks as query counts.

        Args:
            x: Value to format
            pos: Position

        Returns:
            Formatted string
        """
        if x >= 1e6:
            return f"{x/1e6:.1f}M"
        elif x >= 1e3:
            return f"{x/1e3:.0f}K"
        else:
            return f"{x:.0f}"

    def _finish(self, path: Path, save: bool, show: bool) -> str:
        plt.tight_layout()
        output_path = ""
        if save:
            plt.savefig(path, dpi=150)
            output_path = str(path)
            logger.info(f"Chart saved to {output_path}")
        if show:
            plt.show()
        else:
            plt.close()
        return output_path

    def create_accuracy_curve(
        self,
        curves: Union[pd.DataFrame, Dict[str, pd.DataFrame]],
        name: str = "accuracy_vs_queries",
        color_scheme: str = "primary",
        save: bool = True,
        show: bool = False,
    ) -> str:
        """Plot clone accuracy against victim queries.

        Args:
            curves: A ``(queries_used, clone_accuracy)`` frame, or several keyed by run label
            name: File stem
            color_scheme: Color scheme name
            save: Whether to save the chart
            show: Whether to display the chart

        Returns:
            Path to saved chart if save=True, else empty string
        """
        runs = curves if isinstance(curves, dict) else {"clone": curves}
        colors = self.color_schemes.get(color_scheme, self.color_schemes["primary"])

        fig, ax = plt.subplots()
        for i, (label, df) in enumerate(runs.items()):
            ax.plot(
                df["queries_used"],
                df["clone_accuracy"] * 100,
                marker="o",
                markersize=4,
                linewidth=2,
                color=colors[i % len(colors)],
                label=label,
            )
        ax.xaxis.set_major_formatter(FuncFormatter(self._query_formatter))
        ax.set_xlabel("Victim queries")
        ax.set_ylabel("Clone accuracy (%)")
        ax.legend(loc="lower right")
        plt.title("Clone accuracy vs. queries", fontsize=16)
        return self._finish(self.curves_dir / f"{name}.png", save, show)

    def create_class_histogram(
        self,
        hist: pd.DataFrame,
        name: str = "class_histogram",
        save: bool = True,
        show: bool = False,
    ) -> str:
        """Bar chart of generated samples per class (``class``, ``count`` columns)."""
        fig, ax = plt.subplots()
        sns.barplot(data=hist, x="class", y="count", ax=ax, color=self.color_schemes["primary"][0])
        ax.set_xlabel("Class")
        ax.set_ylabel("Generated samples")
        plt.title("Distribution of generated samples across classes", fontsize=16)
        return self._finish(self.histograms_dir / f"{name}.png", save, show)

    def create_sweep_chart(
        self,
        sweep: pd.DataFrame,
        name: Optional[str] = None,
        save: bool = True,
        show: bool = False,
    ) -> str:
        """Final accuracy against a swept parameter (first column) with the accuracy column."""
        param = sweep.columns[0]
        fig, ax = plt.subplots()
        values = sweep[param].astype(str)
        ax.plot(values, sweep["accuracy"] * 100, marker="o", linewidth=2, color=self.color_schemes["primary"][1])
        ax.set_xlabel(param)
        ax.set_ylabel("Final clone accuracy (%)")
        plt.title(f"Sensitivity to {param}", fontsize=16)
        return self._finish(self.curves_dir / f"{name or 'sweep_' + param}.png", save, show)

    def create_loss_chart(
        self,
        history: pd.DataFrame,
        losses: List[str] = ["loss_g", "loss_d", "loss_c"],
        name: str = "losses",
        save: bool = True,
        show: bool = False,
    ) -> str:
        """Loss traces over steps, one panel per loss."""
        present = [col for col in losses if col in history.columns and history[col].notna().any()]
        if not present:
            logger.warning("No loss values to plot")
            return ""
        fig, axes = plt.subplots(len(present), 1, sharex=True, squeeze=False)
        for ax, col, color in zip(axes[:, 0], present, self.color_schemes["deep"]):
            df = history[history[col].notna()]
            ax.plot(df["step"], df[col], linewidth=1, color=color)
            ax.set_ylabel(col)
        axes[-1, 0].set_xlabel("Step")
        fig.suptitle("Training losses", fontsize=16)
        return self._finish(self.curves_dir / f"{name}.png", save, show)

    def create_sample_grid(
        self,
        images: torch.Tensor,
        name: str = "samples",
        nrow: int = 8,
        save: bool = True,
        show: bool = False,
    ) -> str:
        """Grid of images in [-1, 1], e.g. generator samples after a phase."""
        grid = make_grid(images[: nrow * nrow].detach().cpu(), nrow=nrow, normalize=True, value_range=(-1, 1))
        fig, ax = plt.subplots(figsize=(8, 8))
        ax.imshow(np.transpose(grid.numpy(), (1, 2, 0)))
        ax.axis("off")
        plt.title(name, fontsize=14)
        return self._finish(self.samples_dir / f"{name}.png", save, show)
