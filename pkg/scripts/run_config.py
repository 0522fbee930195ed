"""Run configuration: YAML loading, overrides and validation.

A run config is a YAML document with the sections ``eos``, ``domain``,
``initial``, ``solver``, ``diagnostics``, ``output`` and ``validation``
(see ``docs/CONFIG.md``).  Every problem found is collected and raised
together as one :class:`~scripts.errors.ConfigError`.
"""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import yaml

from scripts import eos
from scripts.domain import DomainSpec
from scripts.errors import ConfigError, LabError
from scripts.expressions import compile_field
from scripts.solver import StepParams, StopRule
from scripts.state import InitialProfiles, State, initialize, load_profile

logger = logging.getLogger(__name__)

SECTIONS = ("name", "eos", "domain", "initial", "solver", "diagnostics", "output", "validation", "checks")
DOMAIN_KEYS = ("M", "n", "p_gamma", "theta_gamma", "g", "refinement")
INITIAL_KEYS = ("eta", "theta", "v", "from_profile", "theta_tol")
SOLVER_KEYS = tuple(StepParams.__dataclass_fields__)
DIAGNOSTICS_KEYS = ("q_list", "thresholds", "dwell_fraction", "min_dwell", "stop_on_stabilization", "lyapunov_tol")
OUTPUT_KEYS = ("directory", "snapshot_times")
VALIDATION_KEYS = (
    "allow_subcritical_pressure",
    "p_floor",
    "class_tol",
    "root_tol",
    "root_bracket",
    "inf_bracket",
    "plateau",
    "thresholds",
)
PLATEAU_KEYS = ("window", "flat_tol", "levels")


@dataclass(frozen=True)
class PlateauOptions:
    window: float = 0.05
    flat_tol: float = 1.0e-9
    levels: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class ValidationOptions:
    allow_subcritical_pressure: bool = False
    p_floor: float = 1.0e-4
    class_tol: float = 1.0e-2
    root_tol: float = 1.0e-12
    root_bracket: Optional[Tuple[float, float]] = None
    inf_bracket: Optional[Tuple[float, float]] = None
    plateau: PlateauOptions = PlateauOptions()
    thresholds: eos.ValidationThresholds = eos.ValidationThresholds()


@dataclass
class RunConfig:
    name: str
    eos: eos.EosSpec
    domain: DomainSpec
    initial_state: State
    initial_warnings: List[str]
    solver: StepParams
    stop_rule: StopRule
    q_list: Tuple[float, ...]
    snapshot_times: Tuple[float, ...]
    lyapunov_tol_factor: float
    output_dir: Optional[Path]
    validation: ValidationOptions
    raw: Dict[str, Any] = field(repr=False)
    base_dir: Path = Path(".")

    @property
    def thresholds(self) -> Dict[str, float]:
        return {
            "v_l2": self.stop_rule.v_l2,
            "theta_l2": self.stop_rule.theta_l2,
            "pressure_l2": self.stop_rule.pressure_l2,
        }


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def load_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{path}: YAML parse error{where}: {problem}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_config(path: Path | str, overrides: Sequence[str] = ()) -> RunConfig:
    """Load, override and validate the run config at *path*."""
    path = Path(path)
    raw = load_yaml(path)
    for item in overrides:
        apply_override(raw, item)
    return build_config(raw, base_dir=path.resolve().parent, source=str(path))


def apply_override(raw: Dict[str, Any], item: str) -> None:
    """Apply ``dotted.key=value`` to *raw*; the value is parsed as YAML."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, text = item.split("=", 1)
    set_dotted(raw, key.strip(), yaml.safe_load(text))


def set_dotted(raw: Dict[str, Any], key: str, value: Any) -> None:
    parts = key.split(".")
    node: Any = raw
    for part in parts[:-1]:
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-mapping value")
        node = node.setdefault(part, {})
    if not isinstance(node, dict):
        raise ConfigError(f"override path {key!r} crosses a non-mapping value")
    node[parts[-1]] = value


def get_dotted(raw: Mapping[str, Any], key: str) -> Any:
    node: Any = raw
    for part in key.split("."):
        if not isinstance(node, Mapping) or part not in node:
            raise KeyError(key)
        node = node[part]
    return node


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


class _Collector:
    def __init__(self) -> None:
        self.errors: List[str] = []

    def unknown(self, section: str, data: Mapping[str, Any], allowed: Sequence[str]) -> None:
        extra = sorted(set(data) - set(allowed))
        if extra:
            self.errors.append(f"{section}: unknown key(s) {extra}")

    def number(self, section: str, data: Mapping[str, Any], key: str, default: Any = None,
               required: bool = False) -> Optional[float]:
        if key not in data:
            if required:
                self.errors.append(f"{section}.{key} is required")
            return default
        raw = data[key]
        if isinstance(raw, bool):
            self.errors.append(f"{section}.{key}: expected a number, got {raw!r}")
            return default
        try:
            value = float(raw)
        except (TypeError, ValueError):
            self.errors.append(f"{section}.{key}: expected a number, got {raw!r}")
            return default
        if math.isnan(value):
            self.errors.append(f"{section}.{key} must not be NaN")
            return default
        return value

    def pair(self, section: str, data: Mapping[str, Any], key: str) -> Optional[Tuple[float, float]]:
        if data.get(key) is None:
            return None
        try:
            lo, hi = (float(v) for v in data[key])
        except (TypeError, ValueError):
            self.errors.append(f"{section}.{key}: expected [lo, hi]")
            return None
        if not lo <= hi:
            self.errors.append(f"{section}.{key}: lo must not exceed hi")
            return None
        return lo, hi

    def section(self, raw: Mapping[str, Any], name: str, required: bool = True) -> Dict[str, Any]:
        data = raw.get(name)
        if data is None:
            if required:
                self.errors.append(f"missing section '{name}'")
            return {}
        if not isinstance(data, dict):
            self.errors.append(f"section '{name}' must be a mapping")
            return {}
        return data

    def attempt(self, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            self.errors.extend(exc.messages)
        except LabError as exc:
            self.errors.append(str(exc))
        return None


def _build_eos(col: _Collector, section: Dict[str, Any]) -> Optional[eos.EosSpec]:
    if not section:
        return None
    if "builtin" in section:
        overrides = section.get("overrides") or {}
        col.unknown("eos", section, ("builtin", "overrides"))
        if not isinstance(overrides, dict):
            col.errors.append("eos.overrides must be a mapping")
            return None
        return col.attempt(eos.load_builtin, str(section["builtin"]), overrides)
    name = str(section.get("name", "custom"))
    entry = {k: v for k, v in section.items() if k != "name"}
    return col.attempt(eos.eos_from_mapping, name, entry)


def _float_list(col: _Collector, where: str, raw: Any) -> Tuple[float, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, (list, tuple)):
        col.errors.append(f"{where}: expected a list")
        return ()
    out: List[float] = []
    for item in raw:
        if isinstance(item, str) and item.strip().lower() in ("inf", "infinity"):
            out.append(math.inf)
            continue
        try:
            out.append(float(item))
        except (TypeError, ValueError):
            col.errors.append(f"{where}: {item!r} is not a number")
    return tuple(out)


def build_config(raw: Dict[str, Any], base_dir: Path = Path("."), source: str = "<config>") -> RunConfig:
    """Validate a loaded config mapping and build every run object."""
    raw = copy.deepcopy(raw)
    col = _Collector()
    col.unknown("config", raw, SECTIONS)
    name = str(raw.get("name", Path(source).stem))

    # eos
    spec = _build_eos(col, col.section(raw, "eos"))

    # domain
    dom = col.section(raw, "domain")
    col.unknown("domain", dom, DOMAIN_KEYS)
    M = col.number("domain", dom, "M", required=True)
    n = col.number("domain", dom, "n", required=True)
    p_gamma = col.number("domain", dom, "p_gamma", required=True)
    theta_gamma = col.number("domain", dom, "theta_gamma", required=True)
    refinement = col.number("domain", dom, "refinement", default=8)
    g = None
    if M is not None:
        g = col.attempt(compile_field, dom.get("g", 0), "domain.g", {"M": M})
    domain: Optional[DomainSpec] = None
    if None not in (M, n, p_gamma, theta_gamma, refinement, g):
        if n != int(n):
            col.errors.append("domain.n must be an integer")
        else:
            domain = col.attempt(
                DomainSpec, M=M, n=int(n), p_gamma=p_gamma, theta_gamma=theta_gamma, g=g,
                refinement=int(refinement),
            )
    if domain is not None:
        col.attempt(lambda: domain.stationary)

    # initial data
    ini = col.section(raw, "initial")
    col.unknown("initial", ini, INITIAL_KEYS)
    theta_tol = col.number("initial", ini, "theta_tol", default=1.0e-8)
    initial_state: Optional[State] = None
    initial_warnings: List[str] = []
    if domain is not None and ini:
        if "from_profile" in ini:
            extra = {"eta", "theta", "v"} & set(ini)
            if extra:
                col.errors.append(f"initial: from_profile excludes {sorted(extra)}")
            profile_path = Path(str(ini["from_profile"]))
            if not profile_path.is_absolute():
                profile_path = base_dir / profile_path
            initial_state = col.attempt(load_profile, profile_path, domain.grid)
        else:
            fields = {}
            for key in ("eta", "theta", "v"):
                if key not in ini:
                    col.errors.append(f"initial.{key} is required")
                    continue
                fields[key] = col.attempt(compile_field, ini[key], f"initial.{key}", {"M": domain.M})
            if len(fields) == 3 and None not in fields.values():
                out = col.attempt(
                    initialize, InitialProfiles(**fields), domain.grid, domain, theta_tol
                )
                if out is not None:
                    initial_state, initial_warnings = out

    if domain is not None and initial_state is None and not col.errors:
        col.errors.append("initial: no initial data given")

    # solver
    sol = col.section(raw, "solver")
    col.unknown("solver", sol, SOLVER_KEYS)
    solver_kwargs: Dict[str, Any] = {}
    for key, fdef in StepParams.__dataclass_fields__.items():
        value = col.number("solver", sol, key)
        if value is not None:
            solver_kwargs[key] = int(value) if fdef.type in ("int", int) else value
    params = col.attempt(StepParams, **solver_kwargs)

    # diagnostics
    dia = col.section(raw, "diagnostics", required=False)
    col.unknown("diagnostics", dia, DIAGNOSTICS_KEYS)
    q_list = _float_list(col, "diagnostics.q_list", dia.get("q_list", [4]))
    for q in q_list:
        if not q >= 1.0:
            col.errors.append(f"diagnostics.q_list: exponent {q} must be >= 1")
    thr = dia.get("thresholds") or {}
    if not isinstance(thr, dict):
        col.errors.append("diagnostics.thresholds must be a mapping")
        thr = {}
    col.unknown("diagnostics.thresholds", thr, ("v_l2", "theta_l2", "pressure_l2"))
    stop_kwargs: Dict[str, Any] = {}
    for key in ("v_l2", "theta_l2", "pressure_l2"):
        value = col.number("diagnostics.thresholds", thr, key)
        if value is not None:
            stop_kwargs[key] = value
    for key in ("dwell_fraction", "min_dwell"):
        value = col.number("diagnostics", dia, key)
        if value is not None:
            stop_kwargs[key] = value
    stop_kwargs["enabled"] = bool(dia.get("stop_on_stabilization", True))
    stop_rule = StopRule(**stop_kwargs)
    if not 0 <= stop_rule.dwell_fraction:
        col.errors.append("diagnostics.dwell_fraction must be >= 0")
    lyap_tol = col.number("diagnostics", dia, "lyapunov_tol", default=1.0e-6)

    # output
    out = col.section(raw, "output", required=False)
    col.unknown("output", out, OUTPUT_KEYS)
    snapshot_times = _float_list(col, "output.snapshot_times", out.get("snapshot_times"))
    if any(t < 0 for t in snapshot_times):
        col.errors.append("output.snapshot_times must be >= 0")
    output_dir = Path(str(out["directory"])) if out.get("directory") else None

    # validation
    val = col.section(raw, "validation", required=False)
    col.unknown("validation", val, VALIDATION_KEYS)
    plat = val.get("plateau") or {}
    col.unknown("validation.plateau", plat, PLATEAU_KEYS)
    plateau = PlateauOptions(
        window=col.number("validation.plateau", plat, "window", default=0.05),
        flat_tol=col.number("validation.plateau", plat, "flat_tol", default=1.0e-9),
        levels=col.pair("validation.plateau", plat, "levels"),
    )
    vthr = val.get("thresholds") or {}
    col.unknown("validation.thresholds", vthr, tuple(eos.ValidationThresholds.__dataclass_fields__))
    thresholds = eos.ValidationThresholds()
    try:
        thresholds = eos.ValidationThresholds(
            **{k: (int(v) if k == "samples" else float(v)) for k, v in vthr.items()
               if k in eos.ValidationThresholds.__dataclass_fields__}
        )
    except (TypeError, ValueError):
        col.errors.append("validation.thresholds: values must be numbers")
    validation = ValidationOptions(
        allow_subcritical_pressure=bool(val.get("allow_subcritical_pressure", False)),
        p_floor=col.number("validation", val, "p_floor", default=1.0e-4),
        class_tol=col.number("validation", val, "class_tol", default=1.0e-2),
        root_tol=col.number("validation", val, "root_tol", default=1.0e-12),
        root_bracket=col.pair("validation", val, "root_bracket"),
        inf_bracket=col.pair("validation", val, "inf_bracket"),
        plateau=plateau,
        thresholds=thresholds,
    )
    if not validation.p_floor > 0:
        col.errors.append("validation.p_floor must be positive")

    # cross-checks
    if spec is not None and domain is not None and not validation.allow_subcritical_pressure:
        if spec.family == "nuclear":
            try:
                pS_min = domain.stationary.pS_min
            except LabError:
                pS_min = None
            if pS_min is not None and pS_min < validation.p_floor:
                col.errors.append(
                    f"stationary pressure p_S has minimum {pS_min:.6g} below p_floor "
                    f"{validation.p_floor:g}; the nuclear family needs p_S positive "
                    "(set validation.allow_subcritical_pressure: true to opt out)"
                )

    if col.errors:
        raise ConfigError([f"{source}: {msg}" for msg in col.errors])

    logger.debug("config %s validated", source)
    return RunConfig(
        name=name,
        eos=spec,
        domain=domain,
        initial_state=initial_state,
        initial_warnings=initial_warnings,
        solver=params,
        stop_rule=stop_rule,
        q_list=q_list,
        snapshot_times=snapshot_times,
        lyapunov_tol_factor=lyap_tol,
        output_dir=output_dir,
        validation=validation,
        raw=raw,
        base_dir=base_dir,
    )
