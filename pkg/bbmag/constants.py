"""
    Sphere quadrature and the constant Q_{p,N} = (1/p) int_{S^{N-1}} |w . h|^p dH(h).
"""
import functools
import itertools
import numpy as np

from bbmag.core import pnorm
from bbmag.utils import (
    DimensionMismatchError,
    check_p,
    gauss_legendre,
    load_config,
    log,
    parse_seed,
    pi,
    sphere_area,
    tree_sum,
)


config = load_config()['bbmag']


class SphereRule(object):
    """
        Quadrature on S^{N-1}, weights summing to |S^{N-1}|.

    Rules are built around the axis e_1: the integrand |e_1 . h|^p has its kink
    on panel edges (N = 2) or on the split of the polar variable (N = 3), so
    integrals against e_1 are exact for polynomial p. rotated(w) moves the
    axis onto w.
    """
    def __init__(self, dim, nodes, weights, kind, tolerance):
        nodes = np.array(nodes, dtype=np.float64).reshape(-1, dim)
        weights = np.array(weights, dtype=np.float64).ravel()
        if len(nodes) != len(weights):
            raise DimensionMismatchError("sphere rule needs one weight per node")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        self.dim = int(dim)
        self.nodes = nodes
        self.weights = weights
        self.kind = kind
        self.tolerance = float(tolerance)

    def __repr__(self):
        return f"SphereRule(dim={self.dim}, kind={self.kind}, nodes={len(self.nodes)})"

    def __len__(self):
        return len(self.weights)

    @classmethod
    def build(cls, dim, nodes_2d=None, seed=None):
        """
            Default rule for S^{dim-1}

        :param dim: N >= 1
        :param nodes_2d: total Gauss nodes for N = 2 (multiple of the panel count)
        :param seed: Monte Carlo seed for N >= 4
        """
        cfg = config['sphere']
        dim = int(dim)
        if dim < 1:
            raise DimensionMismatchError(f"sphere dimension must be >= 1, got {dim}")
        if dim == 1:
            return cls(1, [[1.0], [-1.0]], [1.0, 1.0], 'exact', 0.0)

        if dim == 2:
            panels = cfg['panels_2d']
            per_panel = max(1, (nodes_2d or cfg['gauss_nodes_2d']) // panels)
            t, w = gauss_legendre(per_panel)
            width = 2 * pi / panels
            theta = ((np.arange(panels)[:, None] + t[None, :]) * width - pi).ravel()
            weights = np.tile(w * width, panels)
            return cls(2, np.stack([np.cos(theta), np.sin(theta)], axis=-1), weights, 'gauss', 1e-13)

        if dim == 3:
            half = cfg['polar_nodes_3d'] // 2
            n_azimuth = cfg['azimuth_nodes_3d']
            t, w = gauss_legendre(half)
            # polar variable cos(phi) on [-1, 0] and [0, 1]
            z = np.concatenate([t - 1.0, t])
            wz = np.concatenate([w, w])
            theta = 2 * pi * np.arange(n_azimuth) / n_azimuth
            zz, tt = np.meshgrid(z, theta, indexing='ij')
            ring = np.sqrt(np.clip(1.0 - zz ** 2, 0.0, None))
            nodes = np.stack([zz.ravel(), (ring * np.cos(tt)).ravel(), (ring * np.sin(tt)).ravel()], axis=-1)
            weights = np.repeat(wz, n_azimuth) * (2 * pi / n_azimuth)
            return cls(3, nodes, weights, 'product', 1e-12)

        seed = parse_seed(cfg['mc_seed'] if seed is None else seed)
        rng = np.random.default_rng(seed)
        base = rng.standard_normal((cfg['mc_base_samples'], dim))
        base /= np.linalg.norm(base, axis=1, keepdims=True)
        # sign flips and cyclic shifts: every even moment of degree 2 is exact
        blocks = []
        for signs in itertools.product((1.0, -1.0), repeat=dim):
            flipped = base * np.array(signs)
            for shift in range(dim):
                blocks.append(np.roll(flipped, shift, axis=1))
        nodes = np.concatenate(blocks)
        nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
        weights = np.full(len(nodes), sphere_area(dim) / len(nodes))
        return cls(dim, nodes, weights, 'monte-carlo', 1.0 / np.sqrt(cfg['mc_base_samples']))

    def rotated(self, omega):
        """Rule whose axis is the unit vector omega (Householder reflection of e_1)"""
        omega = np.asarray(omega, dtype=np.float64).ravel()
        if omega.shape != (self.dim,):
            raise DimensionMismatchError(f"direction has {omega.size} components, rule has {self.dim}")
        omega = omega / np.linalg.norm(omega)
        v = np.zeros(self.dim)
        v[0] = 1.0
        v -= omega
        vv = float(v @ v)
        if vv < 1e-30:
            return self
        nodes = self.nodes - np.outer(self.nodes @ v, v) * (2.0 / vv)
        return SphereRule(self.dim, nodes, self.weights, self.kind, self.tolerance)

    def integrate(self, values):
        """sum of weight * value, reduced in a fixed order"""
        return tree_sum(self.weights * np.asarray(values, dtype=np.float64))


@functools.lru_cache(maxsize=16)
def default_rule(dim):
    return SphereRule.build(dim)


def q_constant(p, N, rule=None, omega=None, check=True):
    """
        Q_{p,N} = (1/p) int_{S^{N-1}} |omega . h|^p dH(h)

    :param p: real >= 1
    :param N: dimension
    :param rule: SphereRule of dimension N; the default rule when omitted
    :param omega: unit vector; e_1 when omitted
    :param check: evaluate three random directions with the unrotated rule and
                  log when they disagree beyond the rule tolerance
    :return: float
    """
    check_p(p)
    N = int(N)
    rule = default_rule(N) if rule is None else rule
    if rule.dim != N:
        raise DimensionMismatchError(f"rule has dimension {rule.dim}, N = {N}")
    axis_rule = rule if omega is None else rule.rotated(omega)
    value = axis_rule.integrate(np.abs(axis_rule.nodes[:, 0] if omega is None else axis_rule.nodes @ _unit(omega)) ** p) / p

    if check and N > 1:
        rng = np.random.default_rng(parse_seed(config['sphere']['mc_seed']))
        tolerance = max(config['sphere']['check_rtol'], rule.tolerance)
        for direction in rng.standard_normal((3, N)):
            other = rule.integrate(np.abs(rule.nodes @ _unit(direction)) ** p) / p
            if abs(other - value) > tolerance * abs(value):
                log(f"q_constant(p={p}, N={N}): direction {np.round(_unit(direction), 4).tolist()} "
                    f"gives {other:.10g} against {value:.10g}")
    return value


def _unit(v):
    v = np.asarray(v, dtype=np.float64).ravel()
    return v / np.linalg.norm(v)


def directional_integral(v, p, rule=None, aligned=True):
    """
        int_{S^{N-1}} |v . h|_p^p dH(h) = p Q_{p,N} |v|_p^p

    The real and imaginary parts are integrated separately; with aligned=True
    each uses the rule rotated onto its own direction.

    :param v: complex vector (N,)
    :param p: real >= 1
    """
    check_p(p)
    v = np.atleast_1d(np.asarray(v, dtype=np.complex128))
    pnorm(v, p)
    rule = default_rule(len(v)) if rule is None else rule
    if rule.dim != len(v):
        raise DimensionMismatchError(f"vector has {len(v)} components, rule has dimension {rule.dim}")
    total = 0.0
    for part in (np.real(v), np.imag(v)):
        size = np.linalg.norm(part)
        if size == 0:
            continue
        r = rule.rotated(part) if aligned else rule
        total += r.integrate(np.abs(r.nodes @ part) ** p)
    return float(total)
