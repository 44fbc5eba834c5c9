import os
import sys

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from support import Cluster  # noqa: E402


@pytest.fixture
def cluster():
    return Cluster()


@pytest.fixture
def cluster_of():
    """Builds a Cluster with non-default options."""
    return Cluster
