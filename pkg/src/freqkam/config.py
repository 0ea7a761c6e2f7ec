"""TOML run configuration: loading, validation, normalized emission.

Numeric leaves may be written as constant expressions in the same grammar
as the frequency and perturbation fields ("pi", "3 * pi / 2"), so config
files match what the solver actually parses. Loading folds the constant
frequency offsets into the frequency sources, evaluates every numeric
leaf, and emits a normalized form that reloads to an identical compiled
config (the normalized text is also what run identifiers hash).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError, ExprError
from .expr import evaluate, parse, variables

__all__ = ["RunConfig", "load_config", "loads_config", "emit_normalized"]

_SYSTEM_KEYS = {"n", "params", "omega", "omega_bar", "p", "y_center"}
_DOMAIN_KEYS = {"parameter_box", "action_radius", "angle_radius",
                "neighborhood_box"}
_RUN_KEYS = {"epsilon", "epsilon_rational", "xi0", "target_frequency",
             "mode", "max_steps", "tau", "gamma", "k_work", "seed",
             "actions", "stop_tol"}
_TOP_TABLES = {"system", "domain", "run", "expected", "entry"}
_MODES = {"practical", "paper", "paper_faithful"}
_ACTIONS = {"verify", "run", "sweep", "corpus", "phi"}


def _number(value, path):
    """Numeric leaf: plain number or a constant expression string."""
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            tree = parse(value)
        except ExprError as exc:
            raise ConfigError(f"{path}: not a constant expression: {exc}")
        free = variables(tree)
        if free:
            raise ConfigError(
                f"{path}: expression must be constant, has free "
                f"variables {free}")
        return float(evaluate(tree, {}))
    raise ConfigError(f"{path}: expected number or constant expression, "
                      f"got {type(value).__name__}")


def _vector(value, path, length=None):
    if not isinstance(value, list):
        raise ConfigError(f"{path}: expected a list")
    out = [_number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    if length is not None and len(out) != length:
        raise ConfigError(f"{path}: expected {length} entries, "
                          f"got {len(out)}")
    return np.array(out)


def _box(value, path, length=None):
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a list of [lo, hi] pairs")
    rows = []
    for i, row in enumerate(value):
        pair = _vector(row, f"{path}[{i}]", length=2)
        if not pair[0] < pair[1]:
            raise ConfigError(
                f"{path}[{i}]: empty interior, need lo < hi, got "
                f"[{pair[0]}, {pair[1]}]")
        rows.append(pair)
    box = np.array(rows)
    if length is not None and box.shape[0] != length:
        raise ConfigError(f"{path}: expected {length} rows, "
                          f"got {box.shape[0]}")
    return box


def _compile(source, path):
    if not isinstance(source, str):
        raise ConfigError(f"{path}: expected an expression string")
    try:
        return parse(source)
    except ExprError as exc:
        raise ConfigError(f"{path}: {exc}")


def _fmt(x):
    return repr(float(x))


@dataclass
class RunConfig:
    """Validated, compiled run configuration."""

    n: int
    m: int
    param_names: tuple
    omega_sources: list
    omega_trees: list
    p_source: str
    p_tree: object
    box: np.ndarray
    neighborhood: np.ndarray
    s_base: float
    r0: float
    y_center: np.ndarray
    epsilon: float
    epsilon_rational: tuple = None
    xi0: np.ndarray = None
    target_frequency: np.ndarray = None
    mode: str = "practical"
    max_steps: int = 8
    tau: float = None
    gamma: float = None
    k_work: int = 6
    seed: int = 0
    stop_tol: float = None
    actions: tuple = ("run",)
    extras: dict = field(default_factory=dict)

    def system(self):
        from .engine import HamiltonianSystem
        xi0 = self.xi0 if self.xi0 is not None else self.resolve_xi0()
        return HamiltonianSystem(
            n=self.n, param_names=self.param_names,
            omega_trees=self.omega_trees, p_tree=self.p_tree,
            box=self.box, xi0=xi0, y_center=self.y_center)

    def resolve_xi0(self):
        """Invert the frequency mapping for the requested toral frequency.

        Boundary roots are accepted here; whether the base point is
        interior is a hypothesis to verify, not a config-time constraint.
        """
        from .errors import NoSolutionInBox
        from .conditions import make_omega_evaluator
        from .translate import solve_translation
        if self.target_frequency is None:
            raise ConfigError("run.xi0: missing and no target_frequency "
                              "to invert")
        freq = make_omega_evaluator(self.omega_trees, self.param_names)
        try:
            res = solve_translation(freq, self.target_frequency, self.box,
                                    seed=self.box.mean(axis=1))
        except NoSolutionInBox as err:
            root = err.exterior_root
            if root is not None:
                slack = 1e-12 * np.maximum(
                    1.0, np.abs(self.box).max(axis=1))
                inside = ((root >= self.box[:, 0] - slack)
                          & (root <= self.box[:, 1] + slack)).all()
                if inside:
                    return np.clip(root, self.box[:, 0], self.box[:, 1])
            raise
        return res.xi

    def run_kwargs(self):
        """Keyword arguments for engine.run drawn from this config."""
        kw = {"mode": ("paper_faithful" if self.mode == "paper"
                       else self.mode),
              "max_steps": self.max_steps, "k_work": self.k_work,
              "r0": self.r0, "s_base": self.s_base}
        if self.tau is not None:
            kw["tau"] = self.tau
        if self.gamma is not None:
            kw["gamma"] = self.gamma
        if self.stop_tol is not None:
            kw["stop_tol"] = self.stop_tol
        return kw


def loads_config(text, origin="<string>"):
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{origin}: TOML parse failure: {exc}")
    return _build(doc)


def load_config(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    return loads_config(raw.decode("utf-8"), origin=str(path))


def _check_keys(table, allowed, path):
    extra = set(table) - allowed
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")


def _build(doc):
    _check_keys(doc, _TOP_TABLES, "config")
    system = doc.get("system")
    if not isinstance(system, dict):
        raise ConfigError("system: missing table")
    domain = doc.get("domain")
    if not isinstance(domain, dict):
        raise ConfigError("domain: missing table")
    run = doc.get("run")
    if not isinstance(run, dict):
        raise ConfigError("run: missing table")
    _check_keys(system, _SYSTEM_KEYS, "system")
    _check_keys(domain, _DOMAIN_KEYS, "domain")
    _check_keys(run, _RUN_KEYS, "run")

    box = _box(domain.get("parameter_box"), "domain.parameter_box")
    m = box.shape[0]

    params = system.get("params")
    if params is None:
        params = [f"xi{i + 1}" for i in range(m)]
    if (not isinstance(params, list)
            or not all(isinstance(p, str) for p in params)):
        raise ConfigError("system.params: expected a list of names")
    if len(params) != m:
        raise ConfigError(
            f"system.params: {len(params)} names for a parameter box "
            f"with {m} rows")

    omega_raw = system.get("omega")
    if not isinstance(omega_raw, list) or not omega_raw:
        raise ConfigError("system.omega: expected a list of expressions")
    n = system.get("n", len(omega_raw))
    if not isinstance(n, int) or n < 1:
        raise ConfigError("system.n: expected a positive integer")
    if len(omega_raw) != n:
        raise ConfigError(
            f"system.omega: {len(omega_raw)} components, system.n = {n}")

    omega_bar = system.get("omega_bar")
    sources = []
    for i, src in enumerate(omega_raw):
        if not isinstance(src, str):
            raise ConfigError(f"system.omega[{i}]: expected an expression "
                              "string")
        sources.append(src)
    if omega_bar is not None:
        bar = _vector(omega_bar, "system.omega_bar", length=n)
        sources = [f"{_fmt(bar[i])} + ({src})"
                   for i, src in enumerate(sources)]

    trees = [_compile(src, f"system.omega[{i}]")
             for i, src in enumerate(sources)]
    p_source = system.get("p")
    p_tree = _compile(p_source, "system.p")

    allowed = set(params) | {f"y{j + 1}" for j in range(n)} \
        | {f"x{j + 1}" for j in range(n)}
    for i, tree in enumerate(trees):
        extra = set(variables(tree)) - set(params)
        if extra:
            raise ConfigError(
                f"system.omega[{i}]: unknown variables {sorted(extra)}; "
                f"parameters are {params}")
    extra = set(variables(p_tree)) - allowed
    if extra:
        raise ConfigError(f"system.p: unknown variables {sorted(extra)}")

    y_center = system.get("y_center")
    y_center = (np.zeros(n) if y_center is None
                else _vector(y_center, "system.y_center", length=n))

    s_base = _number(domain.get("action_radius", 1.0),
                     "domain.action_radius")
    if s_base <= 0:
        raise ConfigError("domain.action_radius: must be positive")
    r0 = _number(domain.get("angle_radius", 1.0), "domain.angle_radius")
    if not 0 < r0 <= 2:
        raise ConfigError("domain.angle_radius: must lie in (0, 2]")
    neighborhood = domain.get("neighborhood_box")
    neighborhood = (box.copy() if neighborhood is None
                    else _box(neighborhood, "domain.neighborhood_box",
                              length=m))

    eps_rat = run.get("epsilon_rational")
    if eps_rat is not None:
        if (not isinstance(eps_rat, list) or len(eps_rat) != 2
                or not all(isinstance(v, int) for v in eps_rat)
                or eps_rat[1] <= 0):
            raise ConfigError("run.epsilon_rational: expected "
                              "[numerator, denominator] with positive "
                              "denominator")
        eps_rat = (eps_rat[0], eps_rat[1])
    if "epsilon" in run:
        epsilon = _number(run["epsilon"], "run.epsilon")
    elif eps_rat is not None:
        epsilon = eps_rat[0] / eps_rat[1]
    else:
        raise ConfigError("run.epsilon: missing (or give "
                          "run.epsilon_rational)")
    if not 0 < epsilon < 1:
        raise ConfigError(f"run.epsilon: must lie in (0, 1), got {epsilon}")

    xi0 = run.get("xi0")
    target = run.get("target_frequency")
    if xi0 is None and target is None:
        raise ConfigError("run: need xi0 or target_frequency")
    if xi0 is not None:
        xi0 = _vector(xi0, "run.xi0", length=m)
        inside = np.all((box[:, 0] < xi0) & (xi0 < box[:, 1]))
        if not inside:
            raise ConfigError(
                f"run.xi0: {xi0.tolist()} is not interior to "
                "domain.parameter_box")
    if target is not None:
        target = _vector(target, "run.target_frequency", length=n)

    mode = run.get("mode", "practical")
    if mode not in _MODES:
        raise ConfigError(f"run.mode: expected one of {sorted(_MODES)}, "
                          f"got {mode!r}")
    max_steps = run.get("max_steps", 8)
    if not isinstance(max_steps, int) or max_steps < 1:
        raise ConfigError("run.max_steps: expected a positive integer")
    k_work = run.get("k_work", 6)
    if not isinstance(k_work, int) or k_work < 1:
        raise ConfigError("run.k_work: expected a positive integer")
    seed = run.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("run.seed: expected an integer")
    tau = run.get("tau")
    tau = None if tau is None else _number(tau, "run.tau")
    gamma = run.get("gamma")
    gamma = None if gamma is None else _number(gamma, "run.gamma")
    stop_tol = run.get("stop_tol")
    stop_tol = (None if stop_tol is None
                else _number(stop_tol, "run.stop_tol"))

    actions = run.get("actions", ["run"])
    if (not isinstance(actions, list)
            or not all(isinstance(a, str) for a in actions)):
        raise ConfigError("run.actions: expected a list of action names")
    bad = set(actions) - _ACTIONS
    if bad:
        raise ConfigError(f"run.actions: unknown actions {sorted(bad)}; "
                          f"known: {sorted(_ACTIONS)}")

    extras = {k: doc[k] for k in ("expected", "entry") if k in doc}

    return RunConfig(
        n=n, m=m, param_names=tuple(params), omega_sources=sources,
        omega_trees=trees, p_source=p_source, p_tree=p_tree, box=box,
        neighborhood=neighborhood, s_base=s_base, r0=r0,
        y_center=y_center, epsilon=epsilon, epsilon_rational=eps_rat,
        xi0=xi0, target_frequency=target, mode=mode, max_steps=max_steps,
        tau=tau, gamma=gamma, k_work=k_work, seed=seed, stop_tol=stop_tol,
        actions=tuple(actions), extras=extras)


def _toml_scalar(v):
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return _fmt(v)
    raise TypeError(f"cannot emit {type(v).__name__}")


def _toml_list(values):
    parts = []
    for v in values:
        if isinstance(v, (list, tuple, np.ndarray)):
            parts.append(_toml_list(list(v)))
        else:
            parts.append(_toml_scalar(v))
    return "[" + ", ".join(parts) + "]"


def emit_normalized(cfg):
    """Canonical TOML text; reloads to an identical compiled config."""
    lines = ["[system]",
             f"n = {cfg.n}",
             f"params = {_toml_list(cfg.param_names)}",
             f"omega = {_toml_list(cfg.omega_sources)}",
             f"p = {_toml_scalar(cfg.p_source)}",
             f"y_center = {_toml_list(cfg.y_center.tolist())}",
             "",
             "[domain]",
             f"parameter_box = {_toml_list(cfg.box.tolist())}",
             f"action_radius = {_fmt(cfg.s_base)}",
             f"angle_radius = {_fmt(cfg.r0)}",
             f"neighborhood_box = {_toml_list(cfg.neighborhood.tolist())}",
             "",
             "[run]",
             f"epsilon = {_fmt(cfg.epsilon)}"]
    if cfg.epsilon_rational is not None:
        lines.append(
            f"epsilon_rational = {_toml_list(cfg.epsilon_rational)}")
    if cfg.xi0 is not None:
        lines.append(f"xi0 = {_toml_list(cfg.xi0.tolist())}")
    if cfg.target_frequency is not None:
        lines.append("target_frequency = "
                     + _toml_list(cfg.target_frequency.tolist()))
    lines.append(f'mode = "{cfg.mode}"')
    lines.append(f"max_steps = {cfg.max_steps}")
    if cfg.tau is not None:
        lines.append(f"tau = {_fmt(cfg.tau)}")
    if cfg.gamma is not None:
        lines.append(f"gamma = {_fmt(cfg.gamma)}")
    if cfg.stop_tol is not None:
        lines.append(f"stop_tol = {_fmt(cfg.stop_tol)}")
    lines.append(f"k_work = {cfg.k_work}")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"actions = {_toml_list(cfg.actions)}")
    lines.append("")
    return "\n".join(lines)
