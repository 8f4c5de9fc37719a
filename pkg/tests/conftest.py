import numpy as np
import pytest

from lpdigca.lattice import LatticeSpec, build_tables
from lpdigca.model import ModelParams
from lpdigca.solver import GridSpec


@pytest.fixture(scope="session")
def spec4():
    return LatticeSpec(n_h=4)


@pytest.fixture(scope="session")
def spec8():
    return LatticeSpec(n_h=8)


@pytest.fixture(scope="session")
def params_qc():
    """The stable-quasicrystal probe point."""
    return ModelParams(eps=5e-6, alpha=np.sqrt(2.0) / 2.0)


@pytest.fixture(scope="session")
def tables8(spec8, params_qc):
    return build_tables(spec8, params_qc)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(n_g=16)


def random_hermitian(spec, rng, scale=0.1):
    """Random Hermitian coefficient array (real superspace field).

    Nyquist hyperplanes are zeroed: those modes have no conjugate partner in
    the signed index range and fall outside the solver's working subspace.
    """
    import scipy.fft as sfft
    from lpdigca.solver import _nyquist_mask
    samples = rng.normal(scale=scale, size=spec.shape)
    return sfft.fftn(samples, norm="forward") * _nyquist_mask(spec)
