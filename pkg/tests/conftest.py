import time

import numpy as np
import pytest

from noisydistill.benchmark import BenchmarkConfig, benchmark_spec, run_benchmark
from noisydistill.datagen import NoiseConfig, SyntheticSpec, generate

BENCH_SEEDS = (0, 1, 2, 3, 4)

_ACCEPTANCE = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    _ACCEPTANCE[number] = (bool(passed), detail)


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bench_runs():
    """Full method comparison on the default benchmark, one run per seed.

    Shared by every test that needs trained models at benchmark scale.
    """
    t0 = time.perf_counter()
    runs = []
    for seed in BENCH_SEEDS:
        ds, graph = generate(benchmark_spec(seed))
        rep = run_benchmark(ds, graph, cfg=BenchmarkConfig(seed=seed), stamp="fixed")
        runs.append((ds, graph, rep))
    return runs, time.perf_counter() - t0


@pytest.fixture(scope="session")
def small_data():
    """A small dataset for fast training tests."""
    spec = SyntheticSpec(L=6, d=5, n_parents=3, labels_per_sample=(1, 2), samples=300,
                         child_spread=0.8, noise=NoiseConfig(0.4, 1.0, 0.1, 0), seed=3)
    return generate(spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
