import datetime
import functools
import hashlib
from numba import jit
import numpy as np
import os
import pathlib
from scipy.special import gamma, roots_legendre
import yaml


__version__ = "0.3.0"

pi = 3.141592653589793

root = pathlib.Path(__file__).parent.parent.absolute()


def load_config(path=root, config_file='config.yaml'):
    """
        Load config, falling back to the shipped defaults
    """
    config_path = os.path.join(path, config_file)
    if not os.path.exists(config_path):
        config_path = os.path.join(path, config_file.replace('config.', 'config.defaults.'))

    with open(config_path) as cyaml:
        config = yaml.load(cyaml, Loader=yaml.FullLoader)

    return config


def time_stamp():
    """

    :return: UTC time -> string
    """
    return datetime.datetime.utcnow().strftime('%Y%m%d_%H:%M:%S')


def log(message):
    print(f"{time_stamp()}: {message}")


def code_version():
    """
        Package version plus a short digest of the package sources
    """
    digest = hashlib.blake2b(digest_size=6)
    for source in sorted(pathlib.Path(__file__).parent.glob('*.py')):
        digest.update(source.read_bytes())
    return f"{__version__}+{digest.hexdigest()}"


class BbmagError(Exception):
    """
        Base class for all errors raised by bbmag.

    Parameters
    ----------
    msg : str
        Human-readable description, returned by str().
    """
    def __init__(self, msg):
        self.message = msg

    def __str__(self):
        return self.message


class InvalidFieldError(BbmagError):
    """Non-finite samples or values outside a preset's range."""


class DimensionMismatchError(BbmagError):
    """Points, vectors or rules of incompatible dimension."""


class NodeOutsideMaskError(BbmagError):
    """A sampled quantity was requested away from the masked nodes."""


class BoundaryStencilError(BbmagError):
    """Not enough masked neighbours for a second-order stencil."""


class TensorGridError(BbmagError):
    """CSV nodes do not form a complete uniform tensor grid."""


class KernelError(BbmagError):
    """Invalid radial kernel parameters or negative kernel values."""


class UnderResolvedError(BbmagError):
    """A mollifier or kernel is narrower than the grid can represent."""


class ContainmentError(BbmagError):
    """A domain or set is not contained where it has to be."""


class StepSizeError(BbmagError):
    """Projected ascent lost monotonicity."""


class QuadratureError(BbmagError):
    """The requested integral is infinite or cannot be formed."""


class DegenerateFitError(BbmagError):
    """Too few or coincident abscissae for an extrapolation fit."""


class ConfigValidationError(BbmagError):
    """
        Raised with the full list of diagnostics of an experiment config.
    """
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__('; '.join(str(d) for d in self.diagnostics))


def check_p(p):
    if not np.isfinite(p) or p < 1:
        raise BbmagError(f"p must be ≥ 1, got {p}")


def check_s(s):
    if not (0 < s < 1):
        raise BbmagError(f"s must be in (0, 1), got {s}")


@jit(nopython=True)
def _tree_sum(values):
    n = values.shape[0]
    if n == 0:
        return 0.0
    buf = values.copy()
    while n > 1:
        half = n // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if n % 2 == 1:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0]


def tree_sum(values):
    """Pairwise sum whose association order depends only on len(values)

    :param values: 1D array-like of floats
    :return: float
    """
    return float(_tree_sum(np.ascontiguousarray(values, dtype=np.float64).ravel()))


def tree_sum_rows(partials):
    """Column-wise tree_sum of a (n_jobs, n_components) array of partial sums"""
    partials = np.atleast_2d(np.asarray(partials, dtype=np.float64))
    return np.array([tree_sum(partials[:, k]) for k in range(partials.shape[1])])


@functools.lru_cache(maxsize=64)
def gauss_legendre(order):
    """
        Gauss-Legendre nodes and weights mapped to [0, 1]

    :param order: number of nodes
    :return: (nodes, weights), both read-only arrays
    """
    x, w = roots_legendre(order)
    nodes, weights = 0.5 * (x + 1.0), 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def tensor_gauss(order, dim):
    """
        Tensor-product Gauss rule on the unit cube [0, 1]^dim

    :return: nodes (order**dim, dim), weights (order**dim,)
    """
    t, w = gauss_legendre(order)
    grids = np.meshgrid(*([t] * dim), indexing='ij')
    weights = np.meshgrid(*([w] * dim), indexing='ij')
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    return nodes, np.prod(np.stack([g.ravel() for g in weights], axis=-1), axis=-1)


def sphere_area(dim):
    """|S^{dim-1}| = 2 pi^{dim/2} / Gamma(dim/2)"""
    return 2.0 * pi ** (dim / 2.0) / gamma(dim / 2.0)


def parse_seed(seed):
    """Accept ints and hex strings such as '0x5EED'"""
    if isinstance(seed, str):
        return int(seed, 0)
    return int(seed)
