"""Factor graph over SE(2) poses, plane landmarks and 3D points.

The optimizer is Levenberg-Marquardt on dense normal equations.  Plane
blocks are renormalized after every accepted step so landmark normals
stay unit length; acceptance is judged on the post-renormalization
cost, which keeps the sequence of accepted costs monotone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ..geometry import Pose2, PlaneParams, wrap_angle
from .factors import (
    OdometryFactor,
    PlaneFactor,
    PlaneMeasurement,
    PriorFactor,
    SignFactor,
    SignMeasurement,
    _cholesky_whitener,
    odometry_jacobians,
    odometry_residual,
    plane_jacobians,
    plane_projector,
    plane_residual,
    prior_residual,
    sign_jacobians,
    sign_residual,
)

VarKey = tuple  # ("pose" | "plane" | "point", index)

MAX_ITERATIONS = 100
REL_COST_TOL = 1e-9
GRAD_TOL = 1e-8


class SingularSystem(RuntimeError):
    """Normal equations are rank deficient; lists the variables involved."""

    def __init__(self, variables: list[VarKey]):
        self.variables = list(variables)
        names = ", ".join(f"{kind}:{idx}" for kind, idx in self.variables) or "unknown"
        super().__init__(f"normal equations are singular (variables: {names})")


@dataclass
class OptimizeResult:
    cost: float
    initial_cost: float
    iterations: int
    converged: bool
    cost_trace: list[float] = field(default_factory=list)   # accepted costs only
    termination: str = ""


class FactorGraph:
    def __init__(self) -> None:
        self._values: dict[VarKey, object] = {}
        self._order: list[VarKey] = []
        self._counts = {"pose": 0, "plane": 0, "point": 0}
        self.factors: list = []

    # -- variables ---------------------------------------------------------

    def _new_key(self, kind: str, value) -> VarKey:
        key = (kind, self._counts[kind])
        self._counts[kind] += 1
        self._values[key] = value
        self._order.append(key)
        return key

    def add_pose(self, initial: Pose2) -> VarKey:
        return self._new_key("pose", initial)

    def add_plane(self, initial: PlaneParams) -> VarKey:
        vec = initial.as_vector()
        norm = float(np.linalg.norm(vec[:3]))
        if norm < 1e-12:
            raise ValueError("plane normal must be nonzero")
        return self._new_key("plane", PlaneParams(vec[:3] / norm, float(vec[3] / norm)))

    def add_point(self, initial: np.ndarray) -> VarKey:
        return self._new_key("point", np.asarray(initial, dtype=float).reshape(3).copy())

    def pose(self, key: VarKey) -> Pose2:
        return self._values[key]

    def plane(self, key: VarKey) -> PlaneParams:
        return self._values[key]

    def point(self, key: VarKey) -> np.ndarray:
        return self._values[key]

    def keys(self, kind: str | None = None) -> list[VarKey]:
        if kind is None:
            return list(self._order)
        return [k for k in self._order if k[0] == kind]

    @staticmethod
    def dim_of(key: VarKey) -> int:
        return 4 if key[0] == "plane" else 3

    # -- factors -----------------------------------------------------------

    def add_prior(self, key: VarKey, mean: Pose2, cov: np.ndarray) -> None:
        self._check_key(key, "pose")
        self.factors.append(PriorFactor(key, mean, _cholesky_whitener(cov, 3, "prior")))

    def add_odometry(self, key_i: VarKey, key_j: VarKey, rel: Pose2, cov: np.ndarray) -> None:
        self._check_key(key_i, "pose")
        self._check_key(key_j, "pose")
        self.factors.append(
            OdometryFactor(key_i, key_j, rel, _cholesky_whitener(cov, 3, "odometry"))
        )

    def add_plane_factor(self, pose_key: VarKey, plane_key: VarKey, meas: PlaneMeasurement) -> None:
        self._check_key(pose_key, "pose")
        self._check_key(plane_key, "plane")
        lower = np.linalg.cholesky(meas.noise)
        self.factors.append(PlaneFactor(pose_key, plane_key, meas, lower))

    def add_sign_factor(self, pose_key: VarKey, point_key: VarKey, meas: SignMeasurement) -> None:
        self._check_key(pose_key, "pose")
        self._check_key(point_key, "point")
        lower = np.linalg.cholesky(meas.noise)
        self.factors.append(SignFactor(pose_key, point_key, meas, lower))

    def _check_key(self, key: VarKey, kind: str) -> None:
        if key not in self._values:
            raise KeyError(f"unknown variable {key}")
        if key[0] != kind:
            raise TypeError(f"variable {key} is not a {kind}")

    # -- evaluation --------------------------------------------------------

    def _factor_terms(self, factor, values: dict,
                      projected: bool = True) -> tuple[np.ndarray, dict[VarKey, np.ndarray]]:
        """Whitened residual and whitened Jacobian blocks for one factor.

        With `projected` the plane Jacobians are composed with the
        normalization projector so the linear model matches the
        renormalized update; raw Jacobians are used for rank checks.
        """
        if factor.kind == "prior":
            r = prior_residual(values[factor.key], factor.mean)
            blocks = {factor.key: np.eye(3)}
        elif factor.kind == "odometry":
            pi, pj = values[factor.key_i], values[factor.key_j]
            r = odometry_residual(pi, pj, factor.rel)
            j_i, j_j = odometry_jacobians(pi, pj)
            blocks = {factor.key_i: j_i, factor.key_j: j_j}
        elif factor.kind == "plane":
            pose, plane = values[factor.pose_key], values[factor.plane_key]
            r = plane_residual(pose, plane, factor.meas)
            j_pose, j_plane = plane_jacobians(pose, plane)
            if projected:
                j_plane = j_plane @ plane_projector(plane)
            blocks = {factor.pose_key: j_pose, factor.plane_key: j_plane}
        elif factor.kind == "sign":
            pose, point = values[factor.pose_key], values[factor.point_key]
            r = sign_residual(pose, point, factor.meas)
            j_pose, j_point = sign_jacobians(pose, point)
            blocks = {factor.pose_key: j_pose, factor.point_key: j_point}
        else:
            raise ValueError(f"unknown factor kind {factor.kind!r}")
        wr = solve_triangular(factor.whitener, r, lower=True)
        wb = {
            k: solve_triangular(factor.whitener, j, lower=True) for k, j in blocks.items()
        }
        return wr, wb

    def _offsets(self) -> tuple[dict[VarKey, int], int]:
        offsets: dict[VarKey, int] = {}
        total = 0
        for key in self._order:
            offsets[key] = total
            total += self.dim_of(key)
        return offsets, total

    def residual_vector(self, values: dict | None = None) -> np.ndarray:
        values = self._values if values is None else values
        parts = [self._factor_terms(f, values)[0] for f in self.factors]
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def jacobian(self, values: dict | None = None,
                 projected: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Whitened residual stack and dense whitened Jacobian."""
        values = self._values if values is None else values
        offsets, total = self._offsets()
        rows = sum(f.dim for f in self.factors)
        jac = np.zeros((rows, total))
        res = np.zeros(rows)
        row = 0
        for factor in self.factors:
            wr, blocks = self._factor_terms(factor, values, projected)
            res[row:row + factor.dim] = wr
            for key, block in blocks.items():
                col = offsets[key]
                jac[row:row + factor.dim, col:col + block.shape[1]] = block
            row += factor.dim
        return res, jac

    def cost(self, values: dict | None = None) -> float:
        r = self.residual_vector(values)
        return 0.5 * float(r @ r)

    # -- state vector ------------------------------------------------------

    def _apply_step(self, values: dict, delta: np.ndarray) -> dict:
        offsets, _ = self._offsets()
        out: dict[VarKey, object] = {}
        for key in self._order:
            off = offsets[key]
            val = values[key]
            if key[0] == "pose":
                out[key] = Pose2(
                    val.x + delta[off],
                    val.y + delta[off + 1],
                    wrap_angle(val.theta + delta[off + 2]),
                )
            elif key[0] == "plane":
                vec = val.as_vector() + delta[off:off + 4]
                norm = float(np.linalg.norm(vec[:3]))
                if norm < 1e-12:
                    # Step destroyed the normal; keep the previous direction.
                    out[key] = val.copy()
                else:
                    out[key] = PlaneParams(vec[:3] / norm, float(vec[3] / norm))
            else:
                out[key] = val + delta[off:off + 3]
        return out

    def _singular_variables(self, hessian: np.ndarray) -> list[VarKey]:
        offsets, _ = self._offsets()
        bad = []
        for key in self._order:
            off = offsets[key]
            dim = self.dim_of(key)
            block = hessian[off:off + dim, off:off + dim]
            if np.linalg.matrix_rank(block, tol=1e-10) < dim:
                bad.append(key)
        return bad

    # -- optimization ------------------------------------------------------

    def optimize(self, max_iterations: int = MAX_ITERATIONS) -> OptimizeResult:
        if not self.factors:
            return OptimizeResult(0.0, 0.0, 0, True, [0.0], "no factors")
        values = dict(self._values)
        res, jac = self.jacobian(values)
        cost = 0.5 * float(res @ res)
        initial_cost = cost
        trace = [cost]
        hessian = jac.T @ jac
        grad = jac.T @ res

        # Rank check on the raw (unprojected) model: plane scale is
        # deliberately unobservable in the projected one.
        _, raw_jac = self.jacobian(values, projected=False)
        raw_hessian = raw_jac.T @ raw_jac
        try:
            np.linalg.cholesky(raw_hessian)
        except np.linalg.LinAlgError:
            raise SingularSystem(self._singular_variables(raw_hessian)) from None

        lam = 1e-6 * float(np.max(np.diag(hessian))) if hessian.size else 1e-6
        lam = max(lam, 1e-12)
        nu = 2.0
        termination = "max iterations"
        converged = False
        iterations = 0
        identity = np.eye(hessian.shape[0])

        for iterations in range(1, max_iterations + 1):
            if float(np.linalg.norm(grad)) < GRAD_TOL:
                termination = "gradient"
                converged = True
                break
            accepted = False
            while lam <= 1e16:
                try:
                    factorized = cho_factor(hessian + lam * identity, lower=True)
                except np.linalg.LinAlgError:
                    lam *= nu
                    nu *= 2.0
                    continue
                delta = cho_solve(factorized, -grad)
                candidate = self._apply_step(values, delta)
                new_cost = self.cost(candidate)
                if new_cost < cost:
                    # Gain ratio: actual decrease over the model's prediction.
                    predicted = 0.5 * float(delta @ (lam * delta - grad))
                    rho = (cost - new_cost) / predicted if predicted > 0 else 1.0
                    values = candidate
                    decrease = cost - new_cost
                    previous = cost
                    cost = new_cost
                    trace.append(cost)
                    lam = max(lam * max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3), 1e-12)
                    nu = 2.0
                    accepted = True
                    res, jac = self.jacobian(values)
                    hessian = jac.T @ jac
                    grad = jac.T @ res
                    if decrease <= REL_COST_TOL * max(previous, 1e-300):
                        termination = "relative cost"
                        converged = True
                    break
                lam *= nu
                nu *= 2.0
            if not accepted:
                termination = "no progress"
                converged = True
                break
            if converged:
                break

        self._values = values
        return OptimizeResult(cost, initial_cost, iterations, converged, trace, termination)

    # -- marginals ---------------------------------------------------------

    def joint_marginal(self, keys: list[VarKey]) -> np.ndarray:
        """Joint covariance of the requested variables at the current estimate.

        Computed from the full dense information matrix; suitable for the
        problem sizes this system works at.  Plane scale directions carry
        no information in the projected model, so each gets a unit
        information regularizer; nothing downstream couples to them as
        long as candidate Jacobians are projected the same way.
        """
        _, jac = self.jacobian()
        hessian = jac.T @ jac
        offsets, _ = self._offsets()
        for key in self._order:
            if key[0] != "plane":
                continue
            off = offsets[key]
            vec = self._values[key].as_vector()
            radial = vec / np.linalg.norm(vec)
            hessian[off:off + 4, off:off + 4] += np.outer(radial, radial)
        try:
            factorized = cho_factor(hessian, lower=True)
        except np.linalg.LinAlgError:
            raise SingularSystem(self._singular_variables(hessian)) from None
        cov = cho_solve(factorized, np.eye(hessian.shape[0]))
        idx = np.concatenate([
            np.arange(offsets[k], offsets[k] + self.dim_of(k)) for k in keys
        ])
        return cov[np.ix_(idx, idx)]

    # -- serialization -----------------------------------------------------

    def dump(self) -> dict:
        """JSON-ready snapshot of variables, factors and current residuals."""
        variables = []
        for key in self._order:
            val = self._values[key]
            if key[0] == "pose":
                value = [val.x, val.y, val.theta]
            elif key[0] == "plane":
                value = val.as_vector().tolist()
            else:
                value = np.asarray(val).tolist()
            variables.append({"key": f"{key[0]}:{key[1]}", "value": value})
        factors = []
        for factor in self.factors:
            wr, _ = self._factor_terms(factor, self._values)
            entry = {"kind": factor.kind, "whitened_residual": wr.tolist()}
            if factor.kind == "prior":
                entry["vars"] = [f"{factor.key[0]}:{factor.key[1]}"]
                entry["measurement"] = [factor.mean.x, factor.mean.y, factor.mean.theta]
            elif factor.kind == "odometry":
                entry["vars"] = [
                    f"{factor.key_i[0]}:{factor.key_i[1]}",
                    f"{factor.key_j[0]}:{factor.key_j[1]}",
                ]
                entry["measurement"] = [factor.rel.x, factor.rel.y, factor.rel.theta]
            elif factor.kind == "plane":
                entry["vars"] = [
                    f"{factor.pose_key[0]}:{factor.pose_key[1]}",
                    f"{factor.plane_key[0]}:{factor.plane_key[1]}",
                ]
                entry["measurement"] = factor.meas.vector().tolist()
            else:
                entry["vars"] = [
                    f"{factor.pose_key[0]}:{factor.pose_key[1]}",
                    f"{factor.point_key[0]}:{factor.point_key[1]}",
                ]
                entry["measurement"] = factor.meas.position.tolist()
            factors.append(entry)
        return {"version": 1, "variables": variables, "factors": factors}

    def dump_json(self) -> str:
        return json.dumps(self.dump(), indent=1)
