from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from avdiar.localization import AMI8
from avdiar.simulator import Scenario, simulate

SMALL_SCENARIO = dataclasses.replace(
    Scenario(), n_speakers=3, duration=45.0, seed=7, seating_azimuths=(20.0, 140.0, 260.0)
)


@pytest.fixture(scope="session")
def small_bundle():
    """45 s 3-speaker meeting on the 8-mic circular array."""
    return simulate(SMALL_SCENARIO, AMI8)


@pytest.fixture(scope="session")
def small_bundle_dir(small_bundle, tmp_path_factory):
    outdir = tmp_path_factory.mktemp("bundle")
    small_bundle.write(outdir)
    return outdir


@pytest.fixture(scope="session")
def bformat_bundle():
    """Same scenario rendered as B-format (W,X,Y,Z) audio."""
    return simulate(SMALL_SCENARIO, None)
