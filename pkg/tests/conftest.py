import os
import sys

import numpy as np
import pytest

from panoscene import kernels

FIXTURES = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "fixtures")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def run_cli(tmp_path):
    """Run the CLI in-process and return its exit code."""
    from panoscene.cli import main

    def run(*argv):
        return main([str(a) for a in argv])

    return run
