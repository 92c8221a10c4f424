#!/usr/bin/env python
"""
Test module for the RunVisualizer class
"""

import os

import numpy as np
import pandas as pd
import pytest
import torch

from dfms.analysis import RunVisualizer


# Create a temporary directory for test outputs
@pytest.fixture
def temp_output_dir(tmp_path):
    """Create a temporary directory for test outputs."""
    output_dir = tmp_path / "test_visualizations"
    output_dir.mkdir()
    return str(output_dir)


# Create sample data for testing
@pytest.fixture
def sample_curve_data():
    """Create a sample accuracy-vs-queries curve."""
    queries = np.linspace(0, 200_000, 11).astype(int)
    accuracy = 0.1 + 0.5 * (1 - np.exp(-queries / 50_000))
    return pd.DataFrame({"queries_used": queries, "clone_accuracy": accuracy})


@pytest.fixture
def sample_history_frame():
    """Create a sample history table with loss columns."""
    steps = np.arange(30)
    return pd.DataFrame(
        {
            "step": steps,
            "loss_g": -np.log1p(steps),
            "loss_d": np.where(steps % 2 == 0, -1.3, np.nan),
            "loss_c": np.exp(-steps / 10),
        }
    )


# Test initialization
def test_visualizer_init(temp_output_dir):
    """Test that the visualizer initializes correctly."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)

    # Check that output directories were created
    assert os.path.exists(os.path.join(temp_output_dir, "curves"))
    assert os.path.exists(os.path.join(temp_output_dir, "histograms"))
    assert os.path.exists(os.path.join(temp_output_dir, "samples"))

    # Check that color schemes were configured
    assert "primary" in visualizer.color_schemes
    assert "deep" in visualizer.color_schemes
    assert "colorblind" in visualizer.color_schemes


def test_query_formatter(temp_output_dir):
    """Test axis tick formatting."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)
    assert visualizer._query_formatter(8_000_000, None) == "8.0M"
    assert visualizer._query_formatter(50_000, None) == "50K"
    assert visualizer._query_formatter(128, None) == "128"


# Test accuracy curve creation
def test_create_accuracy_curve(temp_output_dir, sample_curve_data):
    """Test creating an accuracy curve, single and multi-run."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)

    output_path = visualizer.create_accuracy_curve(sample_curve_data, save=True, show=False)
    assert os.path.exists(output_path)
    assert output_path.endswith(".png")
    assert os.path.getsize(output_path) > 0  # File should not be empty

    control = sample_curve_data.assign(clone_accuracy=sample_curve_data["clone_accuracy"] - 0.05)
    multi_path = visualizer.create_accuracy_curve(
        {"lambda_div=500": sample_curve_data, "lambda_div=0": control},
        name="paired",
    )
    assert os.path.exists(multi_path)
    assert multi_path.endswith("paired.png")


def test_create_accuracy_curve_no_save(temp_output_dir, sample_curve_data):
    """Test that save=False writes nothing."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)
    assert visualizer.create_accuracy_curve(sample_curve_data, save=False) == ""


# Test histogram creation
def test_create_class_histogram(temp_output_dir):
    """Test creating a class histogram."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)
    hist = pd.DataFrame({"class": range(10), "count": [95, 110, 100, 98, 102, 97, 101, 99, 100, 98]})

    output_path = visualizer.create_class_histogram(hist)
    assert os.path.exists(output_path)
    assert os.path.getsize(output_path) > 0


# Test sweep chart creation
def test_create_sweep_chart(temp_output_dir):
    """Test creating a sweep chart named after the swept parameter."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)
    sweep = pd.DataFrame(
        {"lambda_div": [100, 200, 300, 500, 700, 1000], "accuracy": [0.69, 0.692, 0.695, 0.6966, 0.694, 0.6913]}
    )

    output_path = visualizer.create_sweep_chart(sweep)
    assert os.path.exists(output_path)
    assert output_path.endswith("sweep_lambda_div.png")


# Test loss chart creation
def test_create_loss_chart(temp_output_dir, sample_history_frame):
    """Test creating a loss chart, skipping losses that are absent."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)

    output_path = visualizer.create_loss_chart(sample_history_frame)
    assert os.path.exists(output_path)

    empty = sample_history_frame.assign(loss_g=np.nan, loss_d=np.nan, loss_c=np.nan)
    assert visualizer.create_loss_chart(empty, name="empty") == ""


# Test sample grid creation
def test_create_sample_grid(temp_output_dir):
    """Test rendering an image grid."""
    visualizer = RunVisualizer(output_dir=temp_output_dir)
    images = torch.rand((20, 3, 8, 8)) * 2 - 1

    output_path = visualizer.create_sample_grid(images, name="generator", nrow=4)
    assert os.path.exists(output_path)
    assert os.path.basename(output_path) == "generator.png"

    grey_path = visualizer.create_sample_grid(images[:, :1], name="grey")
    assert os.path.exists(grey_path)
