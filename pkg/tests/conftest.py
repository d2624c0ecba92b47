import numpy as np
import pytest

from genwave.asymptotics import ScenarioContext, existence_pipeline
from genwave.cli import build_context, parse_scenario
from genwave.geometry import (BackgroundGeometry, GridSpec, build_frame,
                              build_lens)
from genwave.regularization import EpsilonNet, FamilySpec, Slot, build_family
from genwave.solver import CauchyData, cfl_timestep

from pathlib import Path

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


def scenario_path(name: str) -> str:
    return str(SCENARIO_DIR / f"{name}.cfg")


def flat_family_spec() -> FamilySpec:
    return FamilySpec(g00=Slot.constant(-1.0), g01=Slot.constant(0.0),
                      g11=Slot.constant(1.0))


def small_flat_context(nx=513, nt=16, t_max=0.5, base=(-2.0, 2.0),
                       extent=9.0, count=6, data=None,
                       spec=None, m_max=3) -> ScenarioContext:
    """Small flat scenario for unit tests (fast, generous margins)."""
    grid = GridSpec(-extent, extent, nx, 0.0, t_max, nt)
    frame = build_frame(grid, BackgroundGeometry.minkowski(), pad=m_max)
    net = EpsilonNet(0.1, 0.5, count)
    metric, coeffs = build_family(spec or flat_family_spec(), net, frame)
    cfl = cfl_timestep(metric, frame)
    lens = build_lens(grid, cfl.c_max, base)
    if data is None:
        xs = grid.xs
        u0 = np.exp(-((xs / 0.35) ** 2))
        u1 = -2.0 * xs / 0.35 ** 2 * u0   # right-moving pulse
        data = CauchyData((0, 0), u0, u1)
    per_eps = [data] * count if isinstance(data, CauchyData) else data
    return ScenarioContext(frame=frame, lens=lens, net=net, metric=metric,
                           coeffs=coeffs, data=per_eps, cfl=cfl, m_max=m_max)


class ScenarioRun:
    """Context plus the existence-pipeline products for a shipped scenario."""

    def __init__(self, name: str):
        self.name = name
        self.cfg = parse_scenario(scenario_path(name))
        self.ctx = build_context(self.cfg)
        self.report = existence_pipeline(self.ctx)

    @property
    def curves(self):
        return self.report.curves

    @property
    def solutions(self):
        return self.report.solutions


@pytest.fixture(scope="session")
def flat_run() -> ScenarioRun:
    return ScenarioRun("flat")


@pytest.fixture(scope="session")
def kink_run() -> ScenarioRun:
    return ScenarioRun("kink")


@pytest.fixture(scope="session")
def oscillatory_run() -> ScenarioRun:
    return ScenarioRun("oscillatory")
