"""Flat ``key = value`` run configuration.

Example::

    mesh.cube = 1
    kappa = 3
    region.1.eps_re = 1
    boundary.all.Q = 0
    boundary.all.data = planewave
    boundary.all.d = 0.3, -0.5, 0.8
    directions.p = 13
    solver.method = bicgstab

``boundary.all.*`` applies to every tag without its own entry for that
field. Unknown keys are errors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .solve import SolverConfig

__all__ = [
    "ConfigError",
    "BoundarySpec",
    "SliceSpec",
    "RunConfig",
    "parse_config",
]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BoundarySpec:
    Q: float = 0.0
    lam: float = 1.0
    data: str = "none"
    d: tuple | None = None
    p: tuple | None = None


@dataclass(frozen=True)
class SliceSpec:
    name: str
    origin: tuple
    u: tuple
    v: tuple
    resolution: tuple = (21, 21)


@dataclass(frozen=True)
class RunConfig:
    kappa: float
    mesh_file: str | None = None
    mesh_cube: int | None = None
    eps: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)
    boundary_default: BoundarySpec | None = None
    lam_interior: float = 1.0
    direction_policy: str = "fixed"
    p: int = 13
    solver: SolverConfig = SolverConfig()
    quadrature_safety: int = 14
    output_dir: str = "."
    residuals: bool = False
    dump_system: bool = False
    slices: tuple = ()

    def boundary_for(self, tag: int) -> BoundarySpec:
        if tag in self.boundary:
            return self.boundary[tag]
        if self.boundary_default is not None:
            return self.boundary_default
        raise ConfigError(f"no boundary specification for tag {tag}")

    def eps_for(self, region: int) -> complex:
        if region not in self.eps:
            raise ConfigError(f"no permittivity for region {region}")
        return self.eps[region]


_TOP = {"kappa", "mesh.file", "mesh.cube", "interior.lambda", "directions.policy", "directions.p",
        "directions.p_min", "directions.p_max", "directions.cond_cap", "solver.method", "solver.tol",
        "solver.max_iter", "solver.seed", "quadrature.safety", "output.dir", "output.residuals",
        "output.dump_system"}
_REGION = re.compile(r"^region\.(\d+)\.(eps_re|eps_im)$")
_BOUNDARY = re.compile(r"^boundary\.(\d+|all)\.(Q|lambda|data|d|p)$")
_SLICE = re.compile(r"^output\.slice\.([A-Za-z0-9_]+)\.(origin|u|v|resolution)$")


def _float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None


def _int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _bool(key, value):
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _vec(key, value, n=3):
    parts = [s for s in re.split(r"[,\s]+", value.strip()) if s]
    if len(parts) != n:
        raise ConfigError(f"{key}: expected {n} comma-separated numbers")
    return tuple(_float(key, s) for s in parts)


def _lines(text):
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        seen[key] = value
    return seen


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration (mesh-dependent checks happen in ``run``)."""
    kv = _lines(text)
    top = {}
    eps_parts: dict[int, dict] = {}
    bnd_parts: dict = {}
    slice_parts: dict[str, dict] = {}
    for key, value in kv.items():
        if key in _TOP:
            top[key] = value
        elif m := _REGION.match(key):
            eps_parts.setdefault(int(m[1]), {})[m[2]] = _float(key, value)
        elif m := _BOUNDARY.match(key):
            tag = "all" if m[1] == "all" else int(m[1])
            bnd_parts.setdefault(tag, {})[m[2]] = (key, value)
        elif m := _SLICE.match(key):
            slice_parts.setdefault(m[1], {})[m[2]] = (key, value)
        else:
            raise ConfigError(f"unknown key {key}")

    if "kappa" not in top:
        raise ConfigError("missing required key kappa")
    kappa = _float("kappa", top["kappa"])
    if kappa <= 0:
        raise ConfigError("kappa must be positive")

    if ("mesh.file" in top) == ("mesh.cube" in top):
        raise ConfigError("exactly one of mesh.file or mesh.cube is required")
    mesh_cube = None
    if "mesh.cube" in top:
        mesh_cube = _int("mesh.cube", top["mesh.cube"])
        if mesh_cube < 1:
            raise ConfigError("mesh.cube must be >= 1")

    eps = {}
    for region, parts in eps_parts.items():
        e = complex(parts.get("eps_re", 1.0), parts.get("eps_im", 0.0))
        if e == 0:
            raise ConfigError(f"region.{region}: eps_r must be nonzero")
        if e.imag < 0:
            raise ConfigError(f"region.{region}.eps_im must be >= 0")
        eps[region] = e

    boundary = {}
    default = None
    for tag, parts in bnd_parts.items():
        spec = {}
        for fld, (key, value) in parts.items():
            if fld == "Q":
                q = _float(key, value)
                if abs(q) > 1:
                    raise ConfigError(f"{key}: |Q| must be <= 1, got {q}")
                spec["Q"] = q
            elif fld == "lambda":
                lam = _float(key, value)
                if lam <= 0:
                    raise ConfigError(f"{key}: lambda must be positive")
                spec["lam"] = lam
            elif fld == "data":
                if value not in ("none", "planewave"):
                    raise ConfigError(f"{key}: expected none or planewave")
                spec["data"] = value
            else:
                spec[fld] = _vec(key, value)
        if tag == "all":
            default = spec
        else:
            boundary[tag] = spec
    merged = {}
    for tag, spec in boundary.items():
        merged[tag] = BoundarySpec(**{**(default or {}), **spec})
    default_spec = BoundarySpec(**default) if default is not None else None
    for tag, spec in list(merged.items()) + ([("all", default_spec)] if default_spec else []):
        if spec.data == "planewave":
            if spec.d is None:
                raise ConfigError(f"boundary.{tag}.d is required for planewave data")
            if np.linalg.norm(spec.d) == 0:
                raise ConfigError(f"boundary.{tag}.d must be nonzero")
            if spec.p is not None and abs(np.dot(spec.d, spec.p)) > 1e-12 * np.linalg.norm(spec.d) * np.linalg.norm(spec.p):
                raise ConfigError(f"boundary.{tag}.p must be orthogonal to d")

    policy = top.get("directions.policy", "fixed")
    if policy not in ("fixed", "adaptive"):
        raise ConfigError("directions.policy must be fixed or adaptive")
    p = _int("directions.p", top.get("directions.p", "13"))
    if p < 1:
        raise ConfigError("directions.p must be >= 1")
    try:
        solver = SolverConfig(
            method=top.get("solver.method", "bicgstab"),
            tol=_float("solver.tol", top.get("solver.tol", "1e-5")),
            max_iter=_int("solver.max_iter", top.get("solver.max_iter", "5000")),
            cond_cap=_float("directions.cond_cap", top.get("directions.cond_cap", "1e12")),
            p_min=_int("directions.p_min", top.get("directions.p_min", "1")),
            p_max=_int("directions.p_max", top.get("directions.p_max", "67")),
            seed=_int("solver.seed", top.get("solver.seed", "0")),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    lam_int = _float("interior.lambda", top.get("interior.lambda", "1"))
    if lam_int <= 0:
        raise ConfigError("interior.lambda must be positive")
    safety = _int("quadrature.safety", top.get("quadrature.safety", "14"))
    if not 0 <= safety < 20:
        raise ConfigError("quadrature.safety must lie in [0, 20)")

    slices = []
    for name, parts in sorted(slice_parts.items()):
        for req in ("origin", "u", "v"):
            if req not in parts:
                raise ConfigError(f"output.slice.{name}.{req} is required")
        res = (21, 21)
        if "resolution" in parts:
            key, value = parts["resolution"]
            res = tuple(int(r) for r in _vec(key, value, 2))
            if min(res) < 1:
                raise ConfigError(f"{key}: resolution must be positive")
        slices.append(SliceSpec(name, _vec(*parts["origin"]), _vec(*parts["u"]), _vec(*parts["v"]), res))

    return RunConfig(
        kappa=kappa,
        mesh_file=top.get("mesh.file"),
        mesh_cube=mesh_cube,
        eps=eps,
        boundary=merged,
        boundary_default=default_spec,
        lam_interior=lam_int,
        direction_policy=policy,
        p=p,
        solver=solver,
        quadrature_safety=safety,
        output_dir=top.get("output.dir", "."),
        residuals=_bool("output.residuals", top.get("output.residuals", "false")),
        dump_system=_bool("output.dump_system", top.get("output.dump_system", "false")),
        slices=tuple(slices),
    )
