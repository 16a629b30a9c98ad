import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from advection_ode.datasets import SynthConfig, make_synthetic_dataset  # noqa: E402
from advection_ode.grid import GridSpec  # noqa: E402


@pytest.fixture
def periodic_grid():
    return GridSpec.regular(8, 16, lat_boundary="periodic")


@pytest.fixture
def tiny_synth():
    return SynthConfig(height=8, width=16, lead=3, n_samples=6, seed=3)


@pytest.fixture
def tiny_dataset(tiny_synth):
    return make_synthetic_dataset(tiny_synth)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


def tiny_bundle_config(grid, channels=2, velocity="resnet", advection="vit", source="resnet3d",
                       plan="u+grad", seed=0):
    """Bundle config with very small networks for fast tests."""
    from advection_ode.models import (AdvectionModelConfig, BundleConfig, ResNetConfig,
                                      SourceModelConfig, VelocityModelConfig, ViTConfig)

    res = lambda: ResNetConfig(ladder=((1, 8), (1, 4)))
    vit = lambda: ViTConfig(hidden=16, depth=1, heads=2, decoder_depth=1)
    return BundleConfig.for_grid(
        grid, channels,
        velocity=VelocityModelConfig(velocity, plan, res(), vit()),
        advection=AdvectionModelConfig(advection, True, vit(), res()),
        source=SourceModelConfig(source, res(), vit()),
        seed=seed)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        status, title, seconds, detail = mod.RESULTS[n]
        tr.write_line(f"[{status}] criterion {n:2d}: {title} ({seconds:.1f}s) {detail}")
