import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _legacy_numpy_repr(doctest_namespace):
    # Doctests were written against NumPy < 2 scalar reprs.
    if np.lib.NumpyVersion(np.__version__) >= "2.0.0":
        np.set_printoptions(legacy="1.25")
    yield
    np.set_printoptions(legacy=False)
