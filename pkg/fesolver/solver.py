import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import spsolve

from fiberuq.exceptions import ElementInversion, InvalidParameter, NonConvergence
from .assembly import TANGENT_STEP, Volumetric, assemble_residual_and_stiffness, gauss_degradation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    load_steps: int = 10
    tol: float = 1e-8
    atol: float = 1e-10
    max_iterations: int = 25
    line_search: bool = False
    min_step: float = 1.0 / 64.0
    volumetric: str = Volumetric.MEAN_DILATATION
    augmentations: int = 0
    tangent_step: float = TANGENT_STEP

    def __post_init__(self):
        if self.load_steps < 1:
            raise InvalidParameter(f'load_steps must be >= 1, got {self.load_steps}')
        if not (self.tol > 0 and self.atol > 0):
            raise InvalidParameter('Newton tolerances must be positive')
        if self.max_iterations < 1:
            raise InvalidParameter(f'max_iterations must be >= 1, got {self.max_iterations}')
        if self.volumetric not in Volumetric.values:
            raise InvalidParameter(f'Unknown volumetric treatment {self.volumetric!r}')
        if self.augmentations < 0:
            raise InvalidParameter('augmentations must be non-negative')


@dataclass(frozen=True, eq=False)
class Solution:
    displacement: np.ndarray
    J: np.ndarray
    sigma33: np.ndarray
    multipliers: np.ndarray | None
    load_factor: float


@dataclass(frozen=True, eq=False)
class StressField:
    values: np.ndarray | None
    converged: bool
    iterations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    load_factor: float = 0.0
    solution: Solution | None = None

    def __post_init__(self):
        if self.converged and (self.values is None or not np.all(np.isfinite(self.values))):
            raise InvalidParameter('A converged stress field needs finite values')


class _Problem:
    """Newton iterations on the free dofs of one boundary-value problem."""

    def __init__(self, mesh, bc, params, dispersion, xi, cfg):
        self.mesh = mesh
        self.params = params
        self.dispersion = dispersion
        self.xi = xi
        self.cfg = cfg
        self.geometry = mesh.reference_geometry()
        self.fixed, self.fixed_values = bc.prescribed(mesh)
        self.free = np.setdiff1d(np.arange(mesh.n_dofs), self.fixed)
        self.multipliers = np.zeros(mesh.n_elements) if cfg.volumetric == Volumetric.MEAN_DILATATION else None
        self.top_displacement = bc.top_displacement

    def assemble(self, u, with_stiffness=True):
        return assemble_residual_and_stiffness(
            self.mesh, u, self.params, self.dispersion, self.xi,
            volumetric=self.cfg.volumetric,
            multipliers=self.multipliers,
            tangent_step=self.cfg.tangent_step,
            with_stiffness=with_stiffness,
            geometry=self.geometry,
        )

    def residual_norm(self, u):
        residual, _, _ = self.assemble(u, with_stiffness=False)
        return float(np.linalg.norm(residual[self.free]))

    def affine_guess(self, load_factor):
        u = np.zeros(self.mesh.n_dofs)
        height = self.mesh.lengths[2]
        u[2::3] = load_factor * self.top_displacement * self.mesh.nodes[:, 2] / height
        return u

    def newton(self, u, load_factor):
        u = u.copy()
        u[self.fixed] = load_factor * self.fixed_values
        history = []
        reference = None
        for iteration in range(1, self.cfg.max_iterations + 1):
            residual, stiffness, _ = self.assemble(u)
            norm = float(np.linalg.norm(residual[self.free]))
            history.append(norm)
            if not np.isfinite(norm):
                break
            if reference is None:
                reference = norm
            if norm <= max(self.cfg.tol * reference, self.cfg.atol):
                return u, iteration - 1, history

            K_ff = stiffness[self.free][:, self.free]
            delta = spsolve(K_ff.tocsc(), -residual[self.free])
            if not np.all(np.isfinite(delta)):
                break

            alpha = 1.0
            trial = u.copy()
            trial[self.free] += delta
            if self.cfg.line_search:
                while alpha > 1.0 / 16.0:
                    try:
                        if self.residual_norm(trial) <= norm:
                            break
                    except ElementInversion:
                        pass
                    alpha *= 0.5
                    trial = u.copy()
                    trial[self.free] += alpha * delta
            u = trial
        raise NonConvergence(
            f'Newton did not converge within {self.cfg.max_iterations} iterations '
            f'(residual history {history[-3:]})',
            load_factor=load_factor,
        )

    def augment(self, u, load_factor, history):
        for _ in range(self.cfg.augmentations):
            _, _, state = self.assemble(u, with_stiffness=False)
            self.multipliers = state.pressure.copy()
            u, iterations, residuals = self.newton(u, load_factor)
            history.append((iterations, residuals))
        return u


def solve(mesh, bc, params, dispersion, xi, cfg=SolverConfig()):
    """Incremental Newton solution up to the full prescribed displacement.

    Failed increments are halved down to ``cfg.min_step``; beyond that the
    solve raises NonConvergence carrying the last converged load factor.
    """
    problem = _Problem(mesh, bc, params, dispersion, xi, cfg)
    u = np.zeros(mesh.n_dofs)
    previous_u, previous_increment = None, None
    load_factor = 0.0
    increment = 1.0 / cfg.load_steps
    iterations, residuals = [], []

    while load_factor < 1.0 - 1e-12:
        increment = min(increment, 1.0 - load_factor)
        target = load_factor + increment
        if previous_u is None:
            guess = problem.affine_guess(target)
        else:
            guess = u + (increment / previous_increment) * (u - previous_u)

        try:
            candidate, count, history = problem.newton(guess, target)
            if cfg.augmentations:
                augmented = []
                candidate = problem.augment(candidate, target, augmented)
                count += sum(item[0] for item in augmented)
                for item in augmented:
                    history.extend(item[1])
        except (NonConvergence, ElementInversion, np.linalg.LinAlgError) as error:
            increment *= 0.5
            logger.warning(f'Load step to {target:.4f} failed ({error}); halving the increment to {increment:.5f}')
            if increment < cfg.min_step - 1e-15:
                raise NonConvergence(
                    f'Load increment fell below {cfg.min_step:.5f} at load factor {load_factor:.4f}',
                    load_factor=load_factor,
                ) from error
            continue

        previous_u, previous_increment = u, increment
        u = candidate
        load_factor = target
        iterations.append(count)
        residuals.append(history)
        logger.debug(f'Load factor {load_factor:.4f} reached in {count} Newton iterations')

    _, _, state = problem.assemble(u, with_stiffness=False)
    sigma = state.cauchy()[..., 2, 2]
    solution = Solution(
        displacement=u,
        J=state.J,
        sigma33=gauss_map(mesh, sigma),
        multipliers=problem.multipliers,
        load_factor=load_factor,
    )
    return solution, iterations, residuals


def gauss_map(mesh, values):
    """Average element Gauss-point values onto the in-plane Gauss grid."""
    shape = mesh.gauss_grid.shape
    flat = np.ravel_multi_index((mesh.gauss_index[..., 0].ravel(), mesh.gauss_index[..., 1].ravel()), shape)
    total = np.bincount(flat, weights=np.asarray(values).ravel(), minlength=shape[0] * shape[1])
    count = np.bincount(flat, minlength=shape[0] * shape[1])
    return (total / count).reshape(shape)


def solve_uniaxial(mesh, bc, params, dispersion, field, cfg=SolverConfig()):
    xi = gauss_degradation(mesh, field)
    try:
        solution, iterations, residuals = solve(mesh, bc, params, dispersion, xi, cfg)
    except NonConvergence as error:
        logger.warning(f'Uniaxial solve did not converge: {error}')
        return StressField(values=None, converged=False, load_factor=error.load_factor or 0.0)
    return StressField(
        values=solution.sigma33,
        converged=True,
        iterations=iterations,
        residuals=residuals,
        load_factor=solution.load_factor,
        solution=solution,
    )


def check_incompressibility(solution):
    return float(np.abs(np.asarray(solution.J) - 1.0).max())
