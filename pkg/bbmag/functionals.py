"""
    Magnetic energies: local W^{1,p}_A, fractional Gagliardo, kernel-weighted,
    and the translation defect.

    The double integrals run over pairs of masked cells of a uniform grid:

    - far pairs (index separation >= 2) with tensor Gauss rules whose order
      drops with the separation;
    - near pairs in the variable h = y - x, on dyadic shells of
      [-2w, 2w]^N around h = 0, integrating x over the overlap box of the
      two cells, split at every axis-aligned cut c and at c - h;
    - the innermost box |h| < a_L from the first-order expansion
      u(x) - e^{i theta} u(x + h) = -h . (grad u - i A u) + O(|h|^2), plus
      the flat-interface measure of pairs across each jump.

    Curved jumps cannot be split per axis: pairs crossing them closer than a
    cell width come from the flat-interface model instead of the shells, and
    the curvature and potential bound of that model enters the error estimate.
"""
import itertools
from multiprocessing.pool import ThreadPool
import numpy as np
import time
from tqdm import tqdm

from bbmag.constants import SphereRule, default_rule
from bbmag.core import Domain, as_points, lp_norm, magnetic_gradient, pnorm_pp, tensor_combine
from bbmag.utils import (
    DimensionMismatchError,
    QuadratureError,
    UnderResolvedError,
    check_p,
    check_s,
    gauss_legendre,
    load_config,
    log,
    tree_sum_rows,
)


config = load_config()['bbmag']


class QuadratureSpec(object):
    """
        Pair-quadrature parameters; defaults come from the quadrature section of the config.
    """
    def __init__(self, order=None, refinement=None, rel_tol=None, abs_tol=None, jump_refinement=None):
        cfg = config['quadrature']
        self.order = int(cfg['order'] if order is None else order)
        self.refinement = int(cfg['refinement'] if refinement is None else refinement)
        self.rel_tol = float(cfg['rel_tol'] if rel_tol is None else rel_tol)
        self.abs_tol = float(cfg['abs_tol'] if abs_tol is None else abs_tol)
        self.jump_refinement = int(cfg['jump_refinement'] if jump_refinement is None else jump_refinement)
        if self.order < 2:
            raise QuadratureError(f"pair rule order must be >= 2, got {self.order}")
        if self.refinement < 1:
            raise QuadratureError(f"diagonal refinement must be >= 1, got {self.refinement}")
        if not self.rel_tol > 0:
            raise QuadratureError(f"target tolerance must be positive, got {self.rel_tol}")

    def __repr__(self):
        return f"QuadratureSpec(order={self.order}, refinement={self.refinement}, rel_tol={self.rel_tol})"

    def to_dict(self):
        return {
            'order': self.order,
            'refinement': self.refinement,
            'rel_tol': self.rel_tol,
            'abs_tol': self.abs_tol,
            'jump_refinement': self.jump_refinement,
        }


class EnergyResult(object):
    """
        Value of an energy with its estimated quadrature error.
    """
    def __init__(self, value, est_error, node_pairs=0, wall_time=0.0, tolerance_met=True, warning=None,
                 components=None):
        self.value = max(float(value), 0.0)
        self.est_error = abs(float(est_error))
        self.node_pairs = int(node_pairs)
        self.wall_time = float(wall_time)
        self.tolerance_met = bool(tolerance_met)
        self.warning = warning
        self.components = dict(components or {})

    def __repr__(self):
        return f"EnergyResult(value={self.value:.12g}, est_error={self.est_error:.3g})"

    def to_dict(self):
        result = {
            'value': self.value,
            'est_error': self.est_error,
            'node_pairs': self.node_pairs,
            'wall_time_s': self.wall_time,
        }
        if self.warning:
            result['warning'] = self.warning
        return result


class GagliardoKernel(object):
    """K(r) = r^{-N-ps}"""
    def __init__(self, s, p, dim):
        check_s(s)
        self.s, self.p, self.dim = s, p, dim
        self.exponent = dim + p * s

    def __repr__(self):
        return f"GagliardoKernel(s={self.s}, p={self.p}, N={self.dim})"

    @property
    def finite_across_jumps(self):
        return self.p * self.s < 1

    def __call__(self, r):
        return r ** (-self.exponent)

    def core_moment(self, R, q):
        """int_0^R K(r) r^{N-1+q} dr"""
        gamma_ = q - self.p * self.s
        return np.asarray(R, dtype=np.float64) ** gamma_ / gamma_


class WeightedKernel(object):
    """K(r) = rho(r) / r^p"""
    def __init__(self, rho, p, dim):
        self.rho, self.p, self.dim = rho, p, dim

    def __repr__(self):
        return f"WeightedKernel({self.rho!r}, p={self.p})"

    @property
    def finite_across_jumps(self):
        return self.rho.singular_exponent - self.p + self.dim + 1 > 0

    def __call__(self, r):
        return self.rho(r) / r ** self.p

    def core_moment(self, R, q):
        R = np.asarray(R, dtype=np.float64)
        params = self.rho.params
        if self.rho.kind == 'bbm' and self.rho.dim == self.dim and np.all(R <= params['r_omega']):
            gamma_ = q - params['p'] * params['s']
            return params['p'] * (1 - params['s']) * R ** gamma_ / gamma_
        cache = {}
        out = np.empty(R.shape)
        for index, radius in np.ndenumerate(R):
            if radius not in cache:
                cache[radius] = self.rho.moment(0.0, radius, beta=q - self.p)
            out[index] = cache[radius]
        return out


def _unit_tensor(order, dim):
    t, w = gauss_legendre(order)
    nodes = np.stack(np.meshgrid(*([t] * dim), indexing='ij'), axis=-1).reshape(-1, dim)
    weights = np.prod(np.stack(np.meshgrid(*([w] * dim), indexing='ij'), axis=-1).reshape(-1, dim), axis=-1)
    return nodes, weights


class PairQuadrature(object):
    """
        int_Omega int_Omega |u(x) - e^{i theta(x, y)} u(y)|_p^p K(|x - y|) dx dy

    Work is split into a static list of jobs whose partial sums are combined by
    a fixed tree reduction, so the value does not depend on the thread count.
    """
    # slots of the per-job partial-sum vector
    FAR, RING, RING_LOW, NEAR_LOW, CORE, CORE_PREV, SHELLS = range(7)

    def __init__(self, u, A, domain, kernel, p, spec=None, transpose=False, threads=None, verbose=False):
        check_p(p)
        if u.dim != domain.dim or A.dim != domain.dim:
            raise DimensionMismatchError(
                f"field ({u.dim}), potential ({A.dim}) and domain ({domain.dim}) dimensions differ"
            )
        self.u, self.A, self.domain, self.kernel, self.p = u, A, domain, kernel, p
        self.spec = QuadratureSpec() if spec is None else spec
        self.transpose = transpose
        self.threads = int(config['threads'] if threads is None else threads)
        self.verbose = verbose
        self.magnetic = not (A.kind == 'preset' and A.preset == 'zero')
        self.dim = domain.dim
        self.cfg = config['quadrature']
        self.chunk = int(self.cfg['chunk_size'])

        self.jumps = u.has_jumps
        self.interface = u.interface(domain)
        if self.jumps and not kernel.finite_across_jumps and len(self.interface[2]):
            raise QuadratureError(f"a jump has infinite energy under {kernel!r}")
        # curved jumps: crossing pairs closer than a cell come from the flat-interface model
        self.curved = self.jumps and not u.planar_jumps(domain)
        self.cuts = self._off_grid_cuts()
        self.levels = self.spec.refinement + (self.spec.jump_refinement if self.jumps else 0)
        self.n_slots = self.SHELLS + self.levels
        self.lookup = domain.cell_lookup()

    def _off_grid_cuts(self):
        """Per-axis breakpoints strictly inside the box and off the cell faces"""
        cuts = []
        for k, c in enumerate(self.u.breakpoints()):
            c = np.asarray(c, dtype=np.float64)
            lo, hi = self.domain.bbox[k]
            position = (c - lo) / self.domain.widths[k]
            keep = (c > lo) & (c < hi) & (np.abs(position - np.round(position)) > 1e-9)
            cuts.append(c[keep])
        return cuts

    # integrand
    def integrand(self, x, y, ux=None, uy=None):
        """|u(x) - e^{i theta} u(y)|_p^p (arguments swapped when transposed)"""
        if self.transpose:
            x, y, ux, uy = y, x, uy, ux
        ux = self.u(x) if ux is None else ux
        uy = self.u(y) if uy is None else uy
        if self.magnetic:
            theta = np.sum((x - y) * self.A(0.5 * (x + y)), axis=-1)
            uy = np.exp(1j * theta) * uy
        return pnorm_pp(ux - uy, self.p, vector=False)

    # far field
    def _far_order(self, separation):
        if self.dim == 1 or separation < self.cfg['far_full_order_below']:
            return self.spec.order
        if separation < self.cfg['far_midpoint_from']:
            return 2
        return 1

    def _cell_nodes(self, order):
        if order not in self._nodes:
            points, weights = self.domain.quadrature_nodes(order, self.cuts if order > 1 else None)
            self._nodes[order] = (points, weights, self.u(points))
        return self._nodes[order]

    def _pairs(self, offset):
        target = self.domain.indices + np.asarray(offset)
        inside = np.all((target >= 0) & (target < np.array(self.domain.resolution)), axis=-1)
        j = np.full(self.domain.n_cells, -1)
        j[inside] = self.lookup[tuple(target[inside].T)]
        i = np.nonzero(j >= 0)[0]
        return i, j[i]

    def _offset_sum(self, offset, order):
        points, weights, values = self._cell_nodes(order)
        i, j = self._pairs(offset)
        if not len(i):
            return 0.0, 0
        g = weights.shape[1]
        total, count = 0.0, 0
        step = max(1, self.chunk // (g * g))
        for start in range(0, len(i), step):
            a, b = i[start:start + step], j[start:start + step]
            x = points[a][:, :, None, :]
            y = points[b][:, None, :, :]
            x, y = np.broadcast_arrays(x, y)
            r = np.linalg.norm(y - x, axis=-1)
            f = self.integrand(x, y, np.broadcast_to(values[a][:, :, None], r.shape),
                               np.broadcast_to(values[b][:, None, :], r.shape))
            total += float(np.sum(f * self.kernel(r) * weights[a][:, :, None] * weights[b][:, None, :]))
            count += r.size
        return total, count

    def _far_job(self, offsets):
        out = np.zeros(self.n_slots)
        count = 0
        for offset in offsets:
            separation = int(np.max(np.abs(offset)))
            value, n = self._offset_sum(offset, self._far_order(separation))
            out[self.FAR] += value
            count += n
            if separation <= 3:
                out[self.RING] += value
                low, n = self._offset_sum(offset, self.spec.order - 1)
                out[self.RING_LOW] += low
                count += n
        return out, count

    def _midpoint_job(self, rows):
        points, weights, values = self._cell_nodes(1)
        centers, u_c = points[:, 0, :], values[:, 0]
        w = weights[0, 0] ** 2
        index = self.domain.indices
        start = self.cfg['far_midpoint_from']
        out = np.zeros(self.n_slots)
        x = centers[rows][:, None, :]
        separation = np.max(np.abs(index[rows][:, None, :] - index[None, :, :]), axis=-1)
        keep = separation >= start
        x, y = np.broadcast_arrays(x, centers[None, :, :])
        ux, uy = np.broadcast_arrays(u_c[rows][:, None], u_c[None, :])
        r = np.linalg.norm(y - x, axis=-1)
        r = np.where(keep, r, 1.0)
        f = self.integrand(x, y, ux, uy)
        out[self.FAR] = float(np.sum(np.where(keep, f * self.kernel(r), 0.0)) * w)
        return out, int(np.count_nonzero(keep))

    # near field
    def _shell_rule(self, level, order):
        """
            Gauss nodes on the shell between the boxes of half-width a and a/2,
            a = 2 w 2^-level, split into 4^N - 2^N subcubes
        """
        half = 2.0 * self.domain.widths * 2.0 ** (-level)
        t, w = gauss_legendre(order)
        nodes, weights = [], []
        for cube in itertools.product(range(4), repeat=self.dim):
            if all(c in (1, 2) for c in cube):
                continue
            lo = half * (np.array(cube) / 2.0 - 1.0)
            side = half / 2.0
            grid = np.stack(np.meshgrid(*[lo[k] + side[k] * t for k in range(self.dim)], indexing='ij'), axis=-1)
            wgrid = np.prod(np.stack(np.meshgrid(*([w] * self.dim), indexing='ij'), axis=-1), axis=-1)
            nodes.append(grid.reshape(-1, self.dim))
            weights.append(wgrid.ravel() * float(np.prod(side)))
        return np.concatenate(nodes), np.concatenate(weights)

    def _overlap_boxes(self, h):
        """
            Boxes C_i cap (C_{i+d} - h), relative to the cell corner, for every
            h node and neighbour offset d, dropping empty ones
        """
        widths = self.domain.widths
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=self.dim)))
        lo = np.maximum(0.0, offsets[None, :, :] * widths - h[:, None, :])
        hi = np.minimum(widths, (offsets[None, :, :] + 1) * widths - h[:, None, :])
        nonempty = np.all(hi > lo, axis=-1)
        qh, qd = np.nonzero(nonempty)
        return qh, qd, lo[qh, qd], hi[qh, qd], offsets

    def _near_rule(self, level, order, nx):
        h, wh = self._shell_rule(level, order)
        qh, qd, lo, hi, offsets = self._overlap_boxes(h)
        unit, unit_w = _unit_tensor(nx, self.dim)
        hweight = (wh * self.kernel(np.linalg.norm(h, axis=-1)))[qh]
        return {
            'level': level,
            'nx': nx,
            'h': h[qh],
            'qd': qd,
            'lo': lo,
            'hi': hi,
            'hweight': hweight,
            'xi': lo[:, None, :] + (hi - lo)[:, None, :] * unit[None, :, :],
            'weight': np.prod(hi - lo, axis=-1)[:, None] * unit_w[None, :] * hweight[:, None],
        }

    def _prepare_near(self):
        n, nx = self.spec.order, int(self.cfg['near_x_order'])
        self._shells = [self._near_rule(level, n, nx) for level in range(self.levels)]
        self._shell_low = self._near_rule(0, n - 1, nx)
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=self.dim)))
        self._neighbour = np.stack([self.domain.masked_neighbour(d) for d in offsets], axis=-1)
        # cells whose near pairs can straddle an off-grid cut, with the cuts each one sees
        self._cut = np.zeros(self.domain.n_cells, dtype=bool)
        self._cell_cuts = []
        for k, cuts in enumerate(self.cuts):
            w = self.domain.widths[k]
            lo = self.domain.lower[:, k][:, None]
            seen = (cuts[None, :] > lo - w) & (cuts[None, :] < lo + 2 * w)
            width = int(seen.sum(axis=1).max()) if self.domain.n_cells else 0
            self._cell_cuts.append(np.sort(np.where(seen, cuts[None, :], np.inf), axis=1)[:, :width])
            self._cut |= seen.any(axis=1)

    def _near_integrand(self, x, y, level):
        f = self.integrand(x, y)
        if self.curved and level >= 1:
            f = np.where(self.u.sides(x) == self.u.sides(y), f, 0.0)
        return f

    def _shell_sum(self, cells, shell):
        h, qd, xi, weight = shell['h'], shell['qd'], shell['xi'], shell['weight']
        total, count = 0.0, 0
        per_cell = xi.shape[0] * xi.shape[1]
        step = max(1, self.chunk // per_cell)
        for start in range(0, len(cells), step):
            block = cells[start:start + step]
            valid = self._neighbour[block][:, qd]
            x = self.domain.lower[block][:, None, None, :] + xi[None, :, :, :]
            y = x + h[None, :, None, :]
            f = self._near_integrand(x, y, shell['level'])
            total += float(np.sum(f * weight[None, :, :] * valid[:, :, None]))
            count += int(np.count_nonzero(valid)) * xi.shape[1]
        return total, count

    def _split_sum(self, cells, shell):
        """
            Near sum over cut cells: along every axis the overlap box is split at
            each cut c and at c - h, so both u(x) and u(x + h) are smooth per piece
        """
        h, qd, hweight = shell['h'], shell['qd'], shell['hweight']
        t, w = gauss_legendre(shell['nx'])
        n_q = len(h)
        per_cell = n_q * int(np.prod([(2 * c.shape[1] + 1) * len(t) for c in self._cell_cuts]))
        step = max(1, self.chunk // per_cell)
        total, count = 0.0, 0
        for start in range(0, len(cells), step):
            block = cells[start:start + step]
            corner = self.domain.lower[block][:, None, :]
            left, right = corner + shell['lo'][None], corner + shell['hi'][None]
            coords, weights = [], []
            for k, cuts in enumerate(self._cell_cuts):
                c = cuts[block][:, None, :]
                breaks = np.concatenate([np.broadcast_to(c, (len(block), n_q, c.shape[-1])),
                                         c - h[None, :, k, None]], axis=-1)
                breaks = np.sort(np.clip(breaks, left[..., k, None], right[..., k, None]), axis=-1)
                edges = np.concatenate([left[..., k, None], breaks, right[..., k, None]], axis=-1)
                size = np.diff(edges, axis=-1)
                nodes = edges[..., :-1, None] + size[..., None] * t
                coords.append(nodes.reshape(len(block) * n_q, -1))
                weights.append((size[..., None] * w).reshape(len(block) * n_q, -1))
            x, wx = tensor_combine(coords, weights)
            x = x.reshape(len(block), n_q, -1, self.dim)
            wx = wx.reshape(len(block), n_q, -1)
            y = x + h[None, :, None, :]
            f = self._near_integrand(x, y, shell['level'])
            valid = self._neighbour[block][:, qd]
            total += float(np.sum(f * wx * (hweight[None, :] * valid)[:, :, None]))
            count += int(np.count_nonzero(valid)) * x.shape[2]
        return total, count

    def _near_sum(self, cells, shell):
        cut = self._cut[cells]
        value, n = self._shell_sum(cells[~cut], shell)
        split, m = self._split_sum(cells[cut], shell)
        return value + split, n + m

    def _near_job(self, cells):
        out = np.zeros(self.n_slots)
        count = 0
        for level, shell in enumerate(self._shells):
            value, n = self._near_sum(cells, shell)
            out[self.SHELLS + level] = value
            count += n
        out[self.NEAR_LOW], n = self._near_sum(cells, self._shell_low)
        return out, count + n

    # analytic core
    def _box_moments(self, level, q):
        """Sphere weights times int_0^R K r^{N-1+q} dr, R the ray length in the level box"""
        half = 2.0 * self.domain.widths * 2.0 ** (-level)
        radius = 1.0 / np.max(np.abs(self._sphere.nodes) / half, axis=1)
        return self._sphere.weights * self.kernel.core_moment(radius, q)

    def _prepare_core(self):
        if self.dim == 2:
            self._sphere = SphereRule.build(2, nodes_2d=config['sphere']['core_nodes_2d'])
        else:
            self._sphere = default_rule(self.dim)
        self._core_moments = {
            self.CORE: self._box_moments(self.levels, self.p),
            self.CORE_PREV: self._box_moments(self.levels - 1, self.p),
        }
        points, normals, weights = self.interface
        delta = 1e-7 * float(np.min(self.domain.widths))
        jump = self.u(points - delta * normals) - self.u(points + delta * normals)
        self._interface_weight = weights * pnorm_pp(jump, self.p, vector=False)

    def _core_job(self, cells):
        out = np.zeros(self.n_slots)
        order = self.spec.order
        points, weights = self.domain.quadrature_nodes(order, self.cuts, cells=cells)
        grad = magnetic_gradient(self.u, self.A, points)
        nodes = self._sphere.nodes
        # int over cells of |omega . Re G|^p + |omega . Im G|^p, per sphere node
        directional = np.zeros(len(nodes))
        for part in (np.real(grad), np.imag(grad)):
            projected = np.abs(part.reshape(-1, self.dim) @ nodes.T) ** self.p
            directional += weights.ravel() @ projected
        for slot in (self.CORE, self.CORE_PREV):
            out[slot] = float(directional @ self._core_moments[slot])
        return out, 0

    def interface_sum(self, level):
        """
            Pairs across the jumps with |h|_inf below the half-width of the level
            box, each interface element taken as flat: sum_e |[u]|_p^p dS int |h . n_e| K dh
        """
        _, normals, _ = self.interface
        if not len(normals):
            return 0.0
        moments = self._box_moments(level, 1.0)
        total = 0.0
        step = max(1, self.chunk // len(moments))
        for start in range(0, len(normals), step):
            directional = np.abs(normals[start:start + step] @ self._sphere.nodes.T) @ moments
            total += float(self._interface_weight[start:start + step] @ directional)
        return total

    def _jump_job(self):
        out = np.zeros(self.n_slots)
        if self.curved:
            out[self.CORE] = out[self.CORE_PREV] = self.interface_sum(1)
        else:
            out[self.CORE] = self.interface_sum(self.levels)
            out[self.CORE_PREV] = self.interface_sum(self.levels - 1)
        return out, 0

    # driver
    def jobs(self):
        partitions = int(self.cfg['partitions'])
        resolution = self.domain.resolution
        ranges = [range(-(n - 1), n) for n in resolution]
        offsets = [d for d in itertools.product(*ranges) if max(abs(k) for k in d) >= 2]
        per_offset = [d for d in offsets if self._far_order(max(abs(k) for k in d)) > 1]
        jobs = []
        for chunk in np.array_split(np.arange(len(per_offset)), min(partitions, max(len(per_offset), 1))):
            if len(chunk):
                jobs.append((self._far_job, ([per_offset[k] for k in chunk],)))
        if len(per_offset) < len(offsets):
            rows = max(1, self.chunk // max(self.domain.n_cells, 1))
            for start in range(0, self.domain.n_cells, rows):
                jobs.append((self._midpoint_job, (np.arange(start, min(start + rows, self.domain.n_cells)),)))
        block = int(self.cfg['cell_block'])
        for start in range(0, self.domain.n_cells, block):
            cells = np.arange(start, min(start + block, self.domain.n_cells))
            jobs.append((self._near_job, (cells,)))
            jobs.append((self._core_job, (cells,)))
        jobs.append((self._jump_job, ()))
        return jobs

    def run(self):
        tic = time.time()
        self._nodes = {}
        for order in (1, 2, self.spec.order - 1, self.spec.order):
            self._cell_nodes(order)
        self._prepare_near()
        self._prepare_core()
        jobs = self.jobs()
        if self.verbose:
            log(f"pair quadrature: {self.domain.n_cells} cells ({int(np.sum(self._cut))} cut), "
                f"{self.levels} shells, {len(jobs)} jobs")

        def work(job):
            return job[0](*job[1])

        if self.threads > 1:
            with ThreadPool(processes=self.threads) as pool:
                results = list(tqdm(pool.imap(work, jobs), total=len(jobs), disable=not self.verbose))
        else:
            results = [work(job) for job in tqdm(jobs, disable=not self.verbose)]

        partial = tree_sum_rows(np.array([r[0] for r in results]))
        node_pairs = sum(r[1] for r in results)
        shells = partial[self.SHELLS:]
        value = partial[self.FAR] + float(np.sum(shells)) + partial[self.CORE]

        previous = value - shells[-1] - partial[self.CORE] + partial[self.CORE_PREV]
        est = abs(value - previous)
        est += abs(shells[0] - partial[self.NEAR_LOW])
        est += abs(partial[self.RING] - partial[self.RING_LOW])
        if self.curved:
            inner = self.interface_sum(1)
            # crossings on the outer shell are only sampled by the x-rule
            est += abs(self.interface_sum(0) - inner)
            bend = self.u.curvature() + self.A.sup_bound(self.domain.bbox)
            est += inner * self.domain.cell_diagonal * bend

        bound = max(self.spec.rel_tol * abs(value), self.spec.abs_tol)
        warning = None
        if est > bound:
            warning = f"tolerance not met: est_error {est:.3g} exceeds {bound:.3g}"
            log(warning)
        toc = time.time()
        if self.verbose:
            log(f"pair quadrature done in {toc - tic:.2f} s: value {value:.12g} +- {est:.3g}")
        components = {
            'far': partial[self.FAR],
            'near': float(np.sum(shells)),
            'core': partial[self.CORE],
        }
        return EnergyResult(value, est, node_pairs, toc - tic, est <= bound, warning, components)


def fractional_magnetic_energy(u, A, domain=None, s=0.5, p=2.0, q=None, transpose=False, threads=None,
                               verbose=False):
    """
        [u]^p = int int |u(x) - e^{i theta} u(y)|_p^p / |x - y|^{N+ps} dx dy

    :param u: ComplexField
    :param A: MagneticPotential
    :param domain: integration Domain, u.domain by default
    :param s: in (0, 1)
    :param p: >= 1
    :param q: QuadratureSpec
    :param transpose: evaluate the integrand with x and y exchanged
    :return: EnergyResult (the p-th power of the seminorm)
    """
    check_s(s)
    check_p(p)
    domain = u.domain if domain is None else domain
    kernel = GagliardoKernel(s, p, domain.dim)
    return PairQuadrature(u, A, domain, kernel, p, q, transpose, threads, verbose).run()


def weighted_difference_energy(u, A, domain=None, rho=None, p=2.0, q=None, transpose=False, threads=None,
                               verbose=False):
    """
        int int |u(x) - e^{i theta} u(y)|_p^p / |x - y|^p rho(|x - y|) dx dy
    """
    check_p(p)
    domain = u.domain if domain is None else domain
    if rho is None or rho.dim != domain.dim:
        raise DimensionMismatchError("kernel and domain dimensions differ")
    if rho.support_radius < float(np.min(domain.widths)):
        raise UnderResolvedError(
            f"kernel support {rho.support_radius} is below the cell width {float(np.min(domain.widths))}"
        )
    kernel = WeightedKernel(rho, p, domain.dim)
    return PairQuadrature(u, A, domain, kernel, p, q, transpose, threads, verbose).run()


def local_magnetic_energy(u, A, domain=None, p=2.0, order=None, q=None):
    """
        int_Omega |grad u - i A u|_p^p dx by per-cell Gauss quadrature;
        est_error is the change from order to order + 2, checked against the
        tolerances of q (a QuadratureSpec)
    """
    check_p(p)
    tic = time.time()
    domain = u.domain if domain is None else domain
    if u.dim != domain.dim or A.dim != domain.dim:
        raise DimensionMismatchError("field, potential and domain dimensions differ")
    spec = QuadratureSpec() if q is None else q
    order = spec.order if order is None else order
    values = []
    for n in (order, order + 2):
        points, weights = domain.quadrature_nodes(n, u.breakpoints())
        values.append(float(np.sum(weights * pnorm_pp(magnetic_gradient(u, A, points), p))))
    est = abs(values[1] - values[0])
    bound = max(spec.rel_tol * abs(values[1]), spec.abs_tol)
    warning = None
    if est > bound:
        warning = f"tolerance not met: est_error {est:.3g} exceeds {bound:.3g}"
        log(warning)
    return EnergyResult(values[1], est, node_pairs=0, wall_time=time.time() - tic, tolerance_met=est <= bound,
                        warning=warning)


def translation_defect(u, A, h, p=2.0, order=None):
    """
        int_{R^N} |u(y + h) - e^{i h . A(y + h/2)} u(y)|_p^p dy, u extended by zero

    Integrated over the union of the support box of u and its translate by -h.
    """
    check_p(p)
    domain = u.domain
    h = as_points(h, domain.dim).reshape(domain.dim)
    if np.linalg.norm(h) > 1:
        log(f"translation defect: |h| = {np.linalg.norm(h):.6g} > 1")
    order = config['quadrature']['order'] if order is None else order
    lower = np.minimum(domain.bbox[:, 0], domain.bbox[:, 0] - h)
    upper = np.maximum(domain.bbox[:, 1], domain.bbox[:, 1] - h)
    resolution = np.maximum(np.ceil((upper - lower) / domain.widths - 1e-9).astype(int), 1)
    region = Domain(np.stack([lower, lower + resolution * domain.widths], axis=-1), resolution)
    cuts = u.breakpoints()
    cuts = [np.concatenate([cuts[k], domain.bbox[k], domain.bbox[k] - h[k], cuts[k] - h[k]])
            for k in range(domain.dim)]
    points, weights = region.quadrature_nodes(order, cuts)
    shifted = points + h
    theta = np.sum(h * A(points + 0.5 * h), axis=-1)
    diff = u.zero_extended(shifted) - np.exp(1j * theta) * u.zero_extended(points)
    return float(np.sum(weights * pnorm_pp(diff, p, vector=False)))


def sobolev_norm(u, A, domain=None, s=0.5, p=2.0, q=None, threads=None):
    """||u||_{L^p}^p + [u]_{W^{s,p}_A}^p"""
    domain = u.domain if domain is None else domain
    energy = fractional_magnetic_energy(u, A, domain, s, p, q, threads=threads)
    lp = lp_norm(u, domain, p) ** p
    return EnergyResult(lp + energy.value, energy.est_error, energy.node_pairs, energy.wall_time,
                        energy.tolerance_met, energy.warning)


def local_sobolev_norm(u, A, domain=None, p=2.0):
    """||u||_{L^p}^p + int |grad u - i A u|_p^p"""
    domain = u.domain if domain is None else domain
    energy = local_magnetic_energy(u, A, domain, p)
    return EnergyResult(lp_norm(u, domain, p) ** p + energy.value, energy.est_error, wall_time=energy.wall_time)
