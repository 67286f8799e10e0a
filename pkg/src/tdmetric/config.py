"""Scenario configuration files: parsing, validation, defaults and saving.

A scenario is a JSON object::

    {
      "name": "rabi",
      "hbar": 1.0,
      "dimension": 2,
      "time": {"t0": 0.0, "t1": 7.85, "steps": 10000},
      "hamiltonian": {"kind": "pauli_rotating", "omega0": 1.0, "omega1": 0.5, "omega": 0.8},
      "eta0": {"kind": "diagonal", "entries": [1.0, 2.0]},
      "eta1": {"kind": "matrix", "entries": [[...]]},
      "lindblad": {"ops": [[...]], "rate_convention": "sqrt_rate_embedded",
                   "sweep": {"parameter": "kappa", "values": [0.1, 0.2]}},
      "observable": [[...]],
      "equivalence": {"c": 0.5},
      "phases": {"period_steps": 10000},
      "tolerances": {"herm_tol": 1e-9, "pd_tol": 1e-9, "gap_tol": 1e-6,
                     "equivalence_tol": 1e-8, "cyc_tol": 1e-6},
      "seed": 0,
      "outputs": {"directory": null, "formats": ["csv", "json"]}
    }

Only ``dimension``, ``time`` and ``hamiltonian`` are required. Matrices use
``[re, im]`` entries (bare reals are accepted on input). With a Lindblad
``sweep`` the listed ``ops`` are unit-rate operators scaled by
``sqrt(kappa)`` for each swept value.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ParseError, ValidationError
from .hamiltonian import KINDS, HamiltonianSpec, TimeGrid
from .lindblad import RATE_CONVENTION, LindbladSet
from .serialization import matrix_from_json, matrix_to_json, vector_from_json

TOP_KEYS = {
    "name", "hbar", "dimension", "time", "hamiltonian", "eta0", "eta1", "lindblad",
    "observable", "equivalence", "phases", "tolerances", "seed", "outputs",
}
FORMATS = ("csv", "json")


@dataclass(frozen=True)
class Tolerances:
    herm_tol: float = 1e-9
    pd_tol: float = 1e-9
    gap_tol: float = 1e-6
    equivalence_tol: float = 1e-8
    cyc_tol: float = 1e-6


@dataclass(frozen=True, eq=False)
class MetricSpec:
    kind: str = "identity"
    entries: Any = None
    normalize: str = "none"

    def matrix(self, dim: int) -> np.ndarray:
        if self.kind == "identity":
            m = np.eye(dim, dtype=complex)
        elif self.kind == "diagonal":
            m = np.diag(np.asarray(self.entries, dtype=complex))
        else:
            m = np.asarray(self.entries, dtype=complex)
        if self.normalize == "trace":
            m = m / np.trace(m).real
        return m

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "diagonal":
            out["entries"] = [[float(z.real), float(z.imag)] for z in np.asarray(self.entries, dtype=complex)]
        elif self.kind == "matrix":
            out["entries"] = matrix_to_json(self.entries)
        if self.normalize != "none":
            out["normalize"] = self.normalize
        return out


@dataclass(frozen=True, eq=False)
class LindbladConfig:
    ops: tuple
    rate_convention: str = RATE_CONVENTION
    sweep_parameter: str | None = None
    sweep_values: tuple = ()

    def sets(self):
        """``(label, LindbladSet)`` pairs: one per swept value, or the single set."""
        base = LindbladSet(self.ops)
        if self.sweep_parameter is None:
            return [("", base)]
        return [(f"kappa={v:g}", base.scaled(float(np.sqrt(v)))) for v in self.sweep_values]

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "ops": [matrix_to_json(a) for a in self.ops],
            "rate_convention": self.rate_convention,
        }
        if self.sweep_parameter is not None:
            out["sweep"] = {"parameter": self.sweep_parameter, "values": [float(v) for v in self.sweep_values]}
        return out


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    dimension: int
    t0: float
    t1: float
    steps: int
    hamiltonian: HamiltonianSpec
    name: str = "scenario"
    hbar: float = 1.0
    eta0: MetricSpec = field(default_factory=MetricSpec)
    eta1: MetricSpec | None = None
    lindblad: LindbladConfig | None = None
    observable: np.ndarray | None = None
    equivalence_c: float | None = None
    period_steps: int | None = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    seed: int = 0
    output_directory: str | None = None
    formats: tuple = FORMATS

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t0, self.t1, self.steps, self.hbar)

    def eta0_matrix(self) -> np.ndarray:
        return self.eta0.matrix(self.dimension)

    def eta1_matrix(self) -> np.ndarray | None:
        return None if self.eta1 is None else self.eta1.matrix(self.dimension)

    def with_steps(self, steps: int) -> "ScenarioConfig":
        return self.replace(steps=int(steps))

    def replace(self, **changes) -> "ScenarioConfig":
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ScenarioConfig(**values)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "hbar": self.hbar,
            "dimension": self.dimension,
            "time": {"t0": self.t0, "t1": self.t1, "steps": self.steps},
            "hamiltonian": hamiltonian_to_dict(self.hamiltonian),
            "eta0": self.eta0.to_dict(),
        }
        if self.eta1 is not None:
            out["eta1"] = self.eta1.to_dict()
        if self.lindblad is not None:
            out["lindblad"] = self.lindblad.to_dict()
        if self.observable is not None:
            out["observable"] = matrix_to_json(self.observable)
        if self.equivalence_c is not None:
            out["equivalence"] = {"c": self.equivalence_c}
        if self.period_steps is not None:
            out["phases"] = {"period_steps": self.period_steps}
        out["tolerances"] = {f.name: getattr(self.tolerances, f.name) for f in fields(Tolerances)}
        out["seed"] = self.seed
        out["outputs"] = {"directory": self.output_directory, "formats": list(self.formats)}
        return out


# -- validation helpers ----------------------------------------------------

def _obj(value, where, allowed, required=()):
    if not isinstance(value, dict):
        raise ValidationError(where, "expected an object")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise ValidationError(f"{where}.{unknown[0]}" if where else unknown[0], "unknown key")
    for key in required:
        if key not in value:
            raise ValidationError(f"{where}.{key}" if where else key, "required")
    return value


def _num(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(where, f"expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(where, "must be finite")
    if positive and value <= 0:
        raise ValidationError(where, "must be positive")
    return value


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(where, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(where, f"must be at least {minimum}")
    return value


def _matrices(value, where, dim):
    if not isinstance(value, list) or not value:
        raise ValidationError(where, "expected a non-empty list of matrices")
    return np.array([matrix_from_json(m, f"{where}[{i}]", dim) for i, m in enumerate(value)])


def _times(value, where):
    if not isinstance(value, list) or not value:
        raise ValidationError(where, "expected a non-empty list of times")
    t = np.array([_num(x, f"{where}[{i}]") for i, x in enumerate(value)])
    if np.any(np.diff(t) <= 0):
        raise ValidationError(where, "times must be strictly increasing")
    return t


_HAM_KEYS = {
    "constant": ({"matrix"}, ("matrix",)),
    "pauli_rotating": ({"omega0", "omega1", "omega"}, ("omega0", "omega1", "omega")),
    "piecewise_constant": ({"times", "matrices"}, ("times", "matrices")),
    "sampled": ({"times", "matrices", "interpolation"}, ("times", "matrices")),
    "fourier": ({"static", "cos", "sin", "nu"}, ("static", "cos", "sin", "nu")),
}


def parse_hamiltonian(obj, dim, hbar) -> HamiltonianSpec:
    where = "hamiltonian"
    if not isinstance(obj, dict):
        raise ValidationError(where, "expected an object")
    kind = obj.get("kind")
    if kind not in KINDS:
        raise ValidationError(f"{where}.kind", f"expected one of {list(KINDS)}, got {kind!r}")
    allowed, required = _HAM_KEYS[kind]
    _obj(obj, where, allowed | {"kind", "hermitian"}, required)
    herm = obj.get("hermitian")
    if herm is not None and not isinstance(herm, bool):
        raise ValidationError(f"{where}.hermitian", "expected a boolean")
    try:
        if kind == "constant":
            return HamiltonianSpec.constant(matrix_from_json(obj["matrix"], f"{where}.matrix", dim), herm)
        if kind == "pauli_rotating":
            if dim != 2:
                raise ValidationError("dimension", "pauli_rotating requires dimension 2")
            return HamiltonianSpec.pauli_rotating(
                _num(obj["omega0"], f"{where}.omega0"),
                _num(obj["omega1"], f"{where}.omega1"),
                _num(obj["omega"], f"{where}.omega"),
                hbar,
            )
        if kind == "fourier":
            mats = [matrix_from_json(obj[k], f"{where}.{k}", dim) for k in ("static", "cos", "sin")]
            return HamiltonianSpec.fourier(*mats, _num(obj["nu"], f"{where}.nu"), herm)
        times = _times(obj["times"], f"{where}.times")
        mats = _matrices(obj["matrices"], f"{where}.matrices", dim)
        if len(mats) != len(times):
            raise ValidationError(f"{where}.matrices", "need exactly one matrix per time")
        if kind == "sampled":
            interp = obj.get("interpolation", "linear")
            if interp != "linear":
                raise ValidationError(f"{where}.interpolation", "only 'linear' is supported")
            if len(times) < 2:
                raise ValidationError(f"{where}.times", "sampled Hamiltonians need at least two samples")
            return HamiltonianSpec.sampled(times, mats, herm)
        return HamiltonianSpec.piecewise_constant(times, mats, herm)
    except ValidationError:
        raise
    except ValueError as exc:
        raise ValidationError(where, str(exc)) from exc


def hamiltonian_to_dict(H: HamiltonianSpec) -> dict:
    p = H.params
    out: dict[str, Any] = {"kind": H.kind}
    if H.kind == "constant":
        out["matrix"] = matrix_to_json(p["matrix"])
    elif H.kind == "pauli_rotating":
        out.update(omega0=p["omega0"], omega1=p["omega1"], omega=p["omega"])
        return out
    elif H.kind == "fourier":
        out.update(static=matrix_to_json(p["static"]), cos=matrix_to_json(p["cos"]),
                   sin=matrix_to_json(p["sin"]), nu=p["nu"])
    else:
        out["times"] = [float(t) for t in p["times"]]
        out["matrices"] = [matrix_to_json(m) for m in p["matrices"]]
        if H.kind == "sampled":
            out["interpolation"] = "linear"
    out["hermitian"] = H.hermitian
    return out


def parse_metric(obj, where, dim) -> MetricSpec:
    _obj(obj, where, {"kind", "entries", "normalize"}, ("kind",))
    kind = obj["kind"]
    normalize = obj.get("normalize", "none")
    if normalize not in ("none", "trace"):
        raise ValidationError(f"{where}.normalize", "expected 'none' or 'trace'")
    if kind == "identity":
        if "entries" in obj:
            raise ValidationError(f"{where}.entries", "identity metric takes no entries")
        return MetricSpec("identity", None, normalize)
    if kind == "diagonal":
        if "entries" not in obj:
            raise ValidationError(f"{where}.entries", "required")
        entries = vector_from_json(obj["entries"], f"{where}.entries", dim)
        if np.any(entries.imag != 0) or np.any(entries.real <= 0):
            raise ValidationError(f"{where}.entries", "diagonal metric entries must be real and positive")
        return MetricSpec("diagonal", entries, normalize)
    if kind == "matrix":
        if "entries" not in obj:
            raise ValidationError(f"{where}.entries", "required")
        return MetricSpec("matrix", matrix_from_json(obj["entries"], f"{where}.entries", dim), normalize)
    raise ValidationError(f"{where}.kind", f"expected identity, diagonal or matrix, got {kind!r}")


def parse_lindblad(obj, dim) -> LindbladConfig:
    where = "lindblad"
    _obj(obj, where, {"ops", "rate_convention", "sweep"}, ("ops",))
    if not isinstance(obj["ops"], list):
        raise ValidationError(f"{where}.ops", "expected a list of matrices")
    ops = tuple(matrix_from_json(m, f"{where}.ops[{i}]", dim) for i, m in enumerate(obj["ops"]))
    conv = obj.get("rate_convention", RATE_CONVENTION)
    if conv != RATE_CONVENTION:
        raise ValidationError(f"{where}.rate_convention", f"only {RATE_CONVENTION!r} is supported")
    if "sweep" not in obj:
        return LindbladConfig(ops, conv)
    sweep = _obj(obj["sweep"], f"{where}.sweep", {"parameter", "values"}, ("parameter", "values"))
    if sweep["parameter"] != "kappa":
        raise ValidationError(f"{where}.sweep.parameter", "only 'kappa' can be swept")
    if not isinstance(sweep["values"], list) or not sweep["values"]:
        raise ValidationError(f"{where}.sweep.values", "expected a non-empty list")
    values = tuple(_num(v, f"{where}.sweep.values[{i}]") for i, v in enumerate(sweep["values"]))
    if any(v < 0 for v in values):
        raise ValidationError(f"{where}.sweep.values", "kappa must be non-negative")
    return LindbladConfig(ops, conv, "kappa", values)


def parse_config(raw: dict, default_name="scenario") -> ScenarioConfig:
    """Validate a decoded JSON object and fill in defaults."""
    _obj(raw, "", TOP_KEYS, ("dimension", "time", "hamiltonian"))
    dim = _int(raw["dimension"], "dimension", minimum=2)
    hbar = _num(raw.get("hbar", 1.0), "hbar", positive=True)
    name = raw.get("name", default_name)
    if not isinstance(name, str) or not name:
        raise ValidationError("name", "expected a non-empty string")

    time = _obj(raw["time"], "time", {"t0", "t1", "steps"}, ("t1", "steps"))
    t0 = _num(time.get("t0", 0.0), "time.t0")
    t1 = _num(time["t1"], "time.t1")
    if not t1 > t0:
        raise ValidationError("time.t1", "must exceed time.t0")
    steps = _int(time["steps"], "time.steps", minimum=2)

    H = parse_hamiltonian(raw["hamiltonian"], dim, hbar)
    eta0 = parse_metric(raw.get("eta0", {"kind": "identity"}), "eta0", dim)
    eta1 = parse_metric(raw["eta1"], "eta1", dim) if "eta1" in raw else None
    lindblad = parse_lindblad(raw["lindblad"], dim) if "lindblad" in raw else None
    observable = matrix_from_json(raw["observable"], "observable", dim) if "observable" in raw else None

    equivalence_c = None
    if "equivalence" in raw:
        eq = _obj(raw["equivalence"], "equivalence", {"c"}, ("c",))
        equivalence_c = _num(eq["c"], "equivalence.c")

    period_steps = None
    if "phases" in raw:
        ph = _obj(raw["phases"], "phases", {"period_steps"}, ("period_steps",))
        period_steps = _int(ph["period_steps"], "phases.period_steps", minimum=1)
        if period_steps > steps:
            raise ValidationError("phases.period_steps", "cannot exceed time.steps")

    tol_raw = _obj(raw.get("tolerances", {}), "tolerances", {f.name for f in fields(Tolerances)})
    tolerances = Tolerances(**{k: _num(v, f"tolerances.{k}", positive=True) for k, v in tol_raw.items()})

    seed = _int(raw.get("seed", 0), "seed", minimum=0)
    outputs = _obj(raw.get("outputs", {}), "outputs", {"directory", "formats"})
    directory = outputs.get("directory")
    if directory is not None and not isinstance(directory, str):
        raise ValidationError("outputs.directory", "expected a string or null")
    formats = outputs.get("formats", list(FORMATS))
    if not isinstance(formats, list) or not formats or any(f not in FORMATS for f in formats):
        raise ValidationError("outputs.formats", f"expected a non-empty subset of {list(FORMATS)}")

    return ScenarioConfig(
        dimension=dim, t0=t0, t1=t1, steps=steps, hamiltonian=H, name=name, hbar=hbar,
        eta0=eta0, eta1=eta1, lindblad=lindblad, observable=observable,
        equivalence_c=equivalence_c, period_steps=period_steps, tolerances=tolerances,
        seed=seed, output_directory=directory, formats=tuple(formats),
    )


def loads_config(text: str, default_name="scenario") -> ScenarioConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno) from exc
    return parse_config(raw, default_name)


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file.

    Raises
    ------
    ParseError
        Malformed JSON, with line and column.
    ValidationError
        Schema violations, naming the offending field.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from exc
    return loads_config(text, default_name=path.stem)


def dumps_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2) + "\n"


def save_config(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_config(cfg), encoding="utf-8")
    return path
