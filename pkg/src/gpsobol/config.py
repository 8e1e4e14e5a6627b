"""Run configuration: a JSON document validated into dataclasses.

Input groups in the config are 1-based (``[1]`` is the first input), as in the
CSV outputs; the Python API is 0-based.  Validation errors name the offending
field by its path, e.g. ``analysis.subsets[2][0]``.

Example::

    {
      "seed": 20240611,
      "functions": [{"builtin": "ishigami"}],
      "design": {"sizes": [200], "lhs_iterations": 1000},
      "models": [{"trend": "constant", "kernel": "matern52"}],
      "analysis": {"subsets": [[1], [2], [3]], "m": 10000, "n_paths": 300, "n_boot": 200}
    }

``functions``, ``design.sizes`` and ``models`` list levels from the cheapest
(coarsest, largest design) to the most accurate.
"""
import hashlib
import json
import shlex
import subprocess
from dataclasses import asdict, dataclass, field

import numpy as np

from .design import InputDistribution
from .errors import InputError
from .functions import BUILTINS, builtin
from .kernel import DEFAULT_NUGGET, FAMILIES
from .kriging import TRENDS
from .sobol_mc import ESTIMATORS


class ConfigError(InputError):
    """Invalid configuration; the message starts with the field path."""


def _fail(path, msg):
    raise ConfigError(f"{path}: {msg}")


def _get(d, key, path, kind, default=..., check=None, desc=None):
    if key not in d:
        if default is ...:
            _fail(f"{path}.{key}", "required field missing")
        return default
    value = d[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        _fail(f"{path}.{key}", f"expected an integer, got {value!r}")
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        _fail(f"{path}.{key}", f"expected a number, got {value!r}")
    if kind is str and not isinstance(value, str):
        _fail(f"{path}.{key}", f"expected a string, got {value!r}")
    if kind is list and not isinstance(value, list):
        _fail(f"{path}.{key}", f"expected a list, got {value!r}")
    if kind is dict and not isinstance(value, dict):
        _fail(f"{path}.{key}", f"expected an object, got {value!r}")
    if kind is bool and not isinstance(value, bool):
        _fail(f"{path}.{key}", f"expected true or false, got {value!r}")
    if check is not None and not check(value):
        _fail(f"{path}.{key}", f"expected {desc}, got {value!r}")
    return float(value) if kind is float else value


def _no_extra(d, allowed, path):
    extra = sorted(set(d) - set(allowed))
    if extra:
        _fail(f"{path}.{extra[0]}", f"unknown field (allowed: {', '.join(sorted(allowed))})")


@dataclass(frozen=True)
class FunctionSpec:
    """A built-in test function or an external command.

    The command receives physical input points as CSV rows (no header) on
    standard input and prints one output value per line.
    """

    builtin: str = None
    command: tuple = None

    @classmethod
    def from_dict(cls, d, path):
        if not isinstance(d, dict):
            _fail(path, "expected an object with 'builtin' or 'command'")
        _no_extra(d, ("builtin", "command"), path)
        if ("builtin" in d) == ("command" in d):
            _fail(path, "give exactly one of 'builtin' or 'command'")
        if "builtin" in d:
            name = _get(d, "builtin", path, str, check=lambda v: v in BUILTINS,
                        desc=f"one of {sorted(BUILTINS)}")
            return cls(builtin=name)
        cmd = d["command"]
        if isinstance(cmd, str):
            cmd = shlex.split(cmd)
        if not isinstance(cmd, list) or not cmd or not all(isinstance(c, str) for c in cmd):
            _fail(f"{path}.command", "expected a non-empty command string or list of strings")
        return cls(command=tuple(cmd))

    def to_dict(self):
        return {"builtin": self.builtin} if self.builtin else {"command": list(self.command)}

    def callable(self):
        if self.builtin:
            return builtin(self.builtin)[0]
        return CommandFunction(self.command)


class CommandFunction:
    """Evaluate an external executable: CSV points on stdin, one value per output line."""

    def __init__(self, argv):
        self.argv = list(argv)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        text = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in X)
        try:
            proc = subprocess.run(self.argv, input=text, capture_output=True, text=True, check=False)
        except OSError as exc:
            raise InputError(f"cannot run {self.argv[0]!r}: {exc}") from None
        if proc.returncode != 0:
            raise InputError(f"command {self.argv} failed with status {proc.returncode}: {proc.stderr.strip()}")
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != len(X):
            raise InputError(f"command {self.argv} returned {len(lines)} values for {len(X)} points")
        try:
            return np.array([float(ln) for ln in lines])
        except ValueError as exc:
            raise InputError(f"command {self.argv} printed a non-numeric value: {exc}") from None


@dataclass(frozen=True)
class DesignSpec:
    sizes: tuple
    lhs_iterations: int = 1000

    @classmethod
    def from_dict(cls, d, path, levels):
        _no_extra(d, ("sizes", "lhs_iterations"), path)
        sizes = _get(d, "sizes", path, list)
        if len(sizes) != levels:
            _fail(f"{path}.sizes", f"expected {levels} sizes (one per level), got {len(sizes)}")
        for i, n in enumerate(sizes):
            if isinstance(n, bool) or not isinstance(n, int) or n < 3:
                _fail(f"{path}.sizes[{i}]", f"expected an integer >= 3, got {n!r}")
            if i and n > sizes[i - 1]:
                _fail(f"{path}.sizes[{i}]", "finer levels need designs no larger than coarser ones")
        it = _get(d, "lhs_iterations", path, int, 1000, lambda v: v >= 0, "an integer >= 0")
        return cls(tuple(sizes), it)


@dataclass(frozen=True)
class ModelSpec:
    trend: str = "constant"
    kernel: str = "matern52"
    nugget: float = DEFAULT_NUGGET
    optimizer_budget: int = 5
    length_scales: tuple = None

    @classmethod
    def from_dict(cls, d, path, dim):
        if not isinstance(d, dict):
            _fail(path, "expected an object")
        _no_extra(d, ("trend", "kernel", "nugget", "optimizer_budget", "length_scales"), path)
        theta = d.get("length_scales")
        if theta is not None:
            if (not isinstance(theta, list) or len(theta) != dim
                    or not all(isinstance(t, (int, float)) and not isinstance(t, bool) and t > 0 for t in theta)):
                _fail(f"{path}.length_scales", f"expected {dim} positive numbers")
            theta = tuple(float(t) for t in theta)
        return cls(
            _get(d, "trend", path, str, "constant", lambda v: v in TRENDS, f"one of {TRENDS}"),
            _get(d, "kernel", path, str, "matern52", lambda v: v in FAMILIES, f"one of {FAMILIES}"),
            _get(d, "nugget", path, float, DEFAULT_NUGGET, lambda v: v >= 0, "a number >= 0"),
            _get(d, "optimizer_budget", path, int, 5, lambda v: v >= 1, "an integer >= 1"),
            theta,
        )


@dataclass(frozen=True)
class BalanceSpec:
    m0: int = 100
    growth: float = 2.0
    m_max: int = 25600
    n_paths: int = 100
    n_boot: int = 100

    @classmethod
    def from_dict(cls, d, path):
        _no_extra(d, ("m0", "growth", "m_max", "n_paths", "n_boot"), path)
        return cls(
            _get(d, "m0", path, int, 100, lambda v: v >= 2, "an integer >= 2"),
            _get(d, "growth", path, float, 2.0, lambda v: v > 1, "a number > 1"),
            _get(d, "m_max", path, int, 25600, lambda v: v >= 2, "an integer >= 2"),
            _get(d, "n_paths", path, int, 100, lambda v: v >= 2, "an integer >= 2"),
            _get(d, "n_boot", path, int, 100, lambda v: v >= 2, "an integer >= 2"),
        )


@dataclass(frozen=True)
class AnalysisSpec:
    subsets: tuple
    m: int
    n_paths: int = 300
    n_boot: int = 200
    estimator: str = "janon"
    method: str = "auto"
    quantile_levels: tuple = (0.025, 0.05, 0.5, 0.95, 0.975)
    test_size: int = 1000
    first_approach: bool = False
    balance: BalanceSpec = field(default_factory=BalanceSpec)

    @classmethod
    def from_dict(cls, d, path, dim):
        _no_extra(d, ("subsets", "m", "n_paths", "n_boot", "estimator", "method", "quantile_levels",
                      "test_size", "first_approach", "balance"), path)
        raw = _get(d, "subsets", path, list, [[i + 1] for i in range(dim)])
        if not raw:
            _fail(f"{path}.subsets", "need at least one input group")
        subsets = []
        for i, group in enumerate(raw):
            if not isinstance(group, list) or not group:
                _fail(f"{path}.subsets[{i}]", "expected a non-empty list of 1-based input indices")
            for j, k in enumerate(group):
                if isinstance(k, bool) or not isinstance(k, int) or not 1 <= k <= dim:
                    _fail(f"{path}.subsets[{i}][{j}]", f"expected an input index in 1..{dim}, got {k!r}")
            subsets.append(tuple(sorted(set(group))))
        levels = _get(d, "quantile_levels", path, list, [0.025, 0.05, 0.5, 0.95, 0.975])
        for i, q in enumerate(levels):
            if isinstance(q, bool) or not isinstance(q, (int, float)) or not 0 <= q <= 1:
                _fail(f"{path}.quantile_levels[{i}]", f"expected a probability, got {q!r}")
        return cls(
            tuple(subsets),
            _get(d, "m", path, int, 5000 * dim, lambda v: v >= 2, "an integer >= 2"),
            _get(d, "n_paths", path, int, 300, lambda v: v >= 1, "an integer >= 1"),
            _get(d, "n_boot", path, int, 200, lambda v: v >= 1, "an integer >= 1"),
            _get(d, "estimator", path, str, "janon", lambda v: v in ESTIMATORS, f"one of {ESTIMATORS}"),
            _get(d, "method", path, str, "auto", lambda v: v in ("auto", "cholesky", "nystrom"),
                 "one of auto, cholesky, nystrom"),
            tuple(float(q) for q in levels),
            _get(d, "test_size", path, int, 1000, lambda v: v >= 0, "an integer >= 0"),
            _get(d, "first_approach", path, bool, False),
            BalanceSpec.from_dict(_get(d, "balance", path, dict, {}), f"{path}.balance"),
        )


@dataclass(frozen=True)
class RunConfig:
    seed: int
    functions: tuple
    inputs: InputDistribution
    design: DesignSpec
    models: tuple
    analysis: AnalysisSpec
    output: str = "out"

    @property
    def levels(self):
        return len(self.functions)

    @classmethod
    def from_dict(cls, d):
        path = "config"
        if not isinstance(d, dict):
            _fail(path, "top level must be a JSON object")
        _no_extra(d, ("seed", "functions", "inputs", "design", "models", "analysis", "output"), path)
        seed = _get(d, "seed", path, int, check=lambda v: 0 <= v < 2**64, desc="an unsigned 64-bit integer")
        funcs = _get(d, "functions", path, list)
        if not funcs:
            _fail(f"{path}.functions", "need at least one function")
        functions = tuple(FunctionSpec.from_dict(f, f"{path}.functions[{i}]") for i, f in enumerate(funcs))
        inputs = _inputs(d.get("inputs"), functions, f"{path}.inputs")
        levels = len(functions)
        design = DesignSpec.from_dict(_get(d, "design", path, dict), f"{path}.design", levels)
        raw_models = _get(d, "models", path, list, [{}] * levels)
        if len(raw_models) != levels:
            _fail(f"{path}.models", f"expected {levels} entries (one per level), got {len(raw_models)}")
        models = tuple(ModelSpec.from_dict(m, f"{path}.models[{i}]", inputs.dim) for i, m in enumerate(raw_models))
        analysis = AnalysisSpec.from_dict(_get(d, "analysis", path, dict, {}), f"{path}.analysis", inputs.dim)
        output = _get(d, "output", path, str, "out")
        return cls(seed, functions, inputs, design, models, analysis, output)

    def to_dict(self):
        out = {
            "seed": self.seed,
            "functions": [f.to_dict() for f in self.functions],
            "inputs": {"lower": list(self.inputs.lower), "upper": list(self.inputs.upper),
                       "names": list(self.inputs.names)},
            "design": {"sizes": list(self.design.sizes), "lhs_iterations": self.design.lhs_iterations},
            "models": [_clean(asdict(m)) for m in self.models],
            "analysis": _clean(asdict(self.analysis)),
            "output": self.output,
        }
        out["analysis"]["subsets"] = [list(s) for s in self.analysis.subsets]
        return out

    def digest(self):
        """SHA-256 of the canonical JSON form (excluding the output directory)."""
        data = self.to_dict()
        data.pop("output")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


def _clean(d):
    return {k: (list(v) if isinstance(v, tuple) else _clean(v) if isinstance(v, dict) else v)
            for k, v in d.items() if v is not None}


def _inputs(raw, functions, path):
    if raw is None:
        names = {f.builtin for f in functions}
        if None in names:
            _fail(path, "required when an external command is used")
        dists = {builtin(n)[1] for n in names}
        if len(dists) != 1:
            _fail(path, "built-in functions have different input spaces; give inputs explicitly")
        return dists.pop()
    if not isinstance(raw, dict):
        _fail(path, "expected an object with lower, upper and optional names")
    _no_extra(raw, ("lower", "upper", "names"), path)
    lower = _get(raw, "lower", path, list)
    upper = _get(raw, "upper", path, list)
    try:
        return InputDistribution(tuple(lower), tuple(upper), raw.get("names"))
    except (InputError, TypeError, ValueError) as exc:
        _fail(path, str(exc))


def load_config(path):
    """Parse and validate a JSON config file; syntax errors report line and column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(data)
