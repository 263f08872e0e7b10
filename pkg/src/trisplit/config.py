"""Run configuration files (TOML).

Example::

    output_dir = "out/convex"
    strict_mode = true
    formats = ["csv", "json"]

    [problem]
    name = "convex_sanity"
    seed = 7                 # optional

    [problem.params]
    m = 2

    [tuning]                 # or a [params] table with mu, beta, tau, sigma
    safety = 0.5

    [stopping]
    max_iterations = 5000
    step_tol = 1e-8
    kkt_tol = 1e-7

Errors are reported as ``path:line: message``.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .solver import StoppingRule
from .tuning import SolverParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

import tomli_w

__all__ = ["RunConfig", "load_config", "parse_config", "dump_config"]

_TOP_KEYS = {"problem", "params", "tuning", "stopping", "strict_mode", "output_dir", "formats"}
_FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    problem: dict
    params: Optional[SolverParams] = None
    tuning: Optional[dict] = None
    stopping: StoppingRule = field(default_factory=StoppingRule)
    strict_mode: bool = True
    output_dir: Optional[Path] = None
    formats: tuple = _FORMATS
    source: str = "<config>"

    @property
    def safety(self) -> float:
        return float((self.tuning or {}).get("safety", 0.5))

    def to_dict(self) -> dict:
        out = {"strict_mode": self.strict_mode, "formats": list(self.formats), "problem": dict(self.problem)}
        if self.output_dir is not None:
            out["output_dir"] = str(self.output_dir)
        if self.params is not None:
            out["params"] = self.params.to_dict()
        if self.tuning is not None:
            out["tuning"] = dict(self.tuning)
        out["stopping"] = {k: v for k, v in self.stopping.to_dict().items() if v is not None}
        return out


def _line_of(text, table=None, key=None) -> int:
    """1-based line of ``[table]`` or of ``key = ...`` (inside ``table`` if given)."""
    lines = text.splitlines()
    start = 0
    if table is not None:
        pat = re.compile(r"^\s*\[\s*" + re.escape(table) + r"\s*\]")
        for i, line in enumerate(lines):
            if pat.match(line):
                if key is None:
                    return i + 1
                start = i + 1
                break
        else:
            if key is None:
                return 1
    if key is not None:
        pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
        for i in range(start, len(lines)):
            if table is not None and i > start and lines[i].lstrip().startswith("[") and not \
                    lines[i].lstrip().startswith("[" + table + "."):
                break
            if pat.match(lines[i]):
                return i + 1
    return 1


def _float(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{where} must be a number, got {value!r}")
    return float(value)


def parse_config(text: str, source="<config>") -> RunConfig:
    """Parse and validate a TOML run configuration."""

    def fail(msg, table=None, key=None):
        raise ConfigError(f"{source}:{_line_of(text, table, key)}: {msg}")

    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = m.group(1) if m else "1"
        raise ConfigError(f"{source}:{line}: {exc}") from None

    for key in data:
        if key not in _TOP_KEYS:
            if isinstance(data[key], dict):
                fail(f"unknown table [{key}]", key)
            fail(f"unknown key {key!r}", None, key)

    problem = data.get("problem")
    if not isinstance(problem, dict) or "name" not in problem:
        fail("missing [problem] table with a name", "problem")
    for key in problem:
        if key not in ("name", "seed", "params"):
            fail(f"unknown key {key!r} in [problem]", "problem", key)
    if "seed" in problem and (not isinstance(problem["seed"], int) or not 0 <= problem["seed"] < 2**64):
        fail("problem seed must be an integer in [0, 2^64)", "problem", "seed")
    problem = {"name": problem["name"], "seed": problem.get("seed"), "params": dict(problem.get("params", {}))}

    has_params, has_tuning = "params" in data, "tuning" in data
    if has_params and has_tuning:
        line = max(_line_of(text, "params"), _line_of(text, "tuning"))
        raise ConfigError(f"{source}:{line}: give either [params] or [tuning], not both")
    if not (has_params or has_tuning):
        fail("one of [params] or [tuning] is required")

    params = None
    if has_params:
        table = data["params"]
        missing = {"mu", "beta", "tau", "sigma"} - set(table)
        if missing:
            fail(f"[params] is missing {sorted(missing)}", "params")
        for key in table:
            if key not in ("mu", "beta", "tau", "sigma"):
                fail(f"unknown key {key!r} in [params]", "params", key)
        try:
            params = SolverParams(**{k: _float(v, k) for k, v in table.items()})
        except ValueError as exc:
            fail(str(exc), "params")

    tuning = None
    if has_tuning:
        tuning = dict(data["tuning"])
        for key in tuning:
            if key != "safety":
                fail(f"unknown key {key!r} in [tuning]", "tuning", key)
        try:
            safety = _float(tuning.get("safety", 0.5), "safety")
        except ValueError as exc:
            fail(str(exc), "tuning", "safety")
        if not 0 < safety < 1:
            fail("safety must lie in (0, 1)", "tuning", "safety")
        tuning["safety"] = safety

    stopping = StoppingRule()
    if "stopping" in data:
        table = data["stopping"]
        kwargs = {}
        for key, value in table.items():
            try:
                if key == "max_iterations":
                    if isinstance(value, bool) or not isinstance(value, int):
                        raise ValueError("max_iterations must be an integer")
                    kwargs[key] = value
                elif key in ("step_tol", "kkt_tol", "divergence_guard"):
                    kwargs[key] = _float(value, key)
                else:
                    raise ValueError(f"unknown key {key!r} in [stopping]")
            except ValueError as exc:
                fail(str(exc), "stopping", key)
        try:
            stopping = StoppingRule(**kwargs)
        except ValueError as exc:
            fail(str(exc), "stopping")

    strict = data.get("strict_mode", True)
    if not isinstance(strict, bool):
        fail("strict_mode must be true or false", None, "strict_mode")
    formats = data.get("formats", list(_FORMATS))
    if not isinstance(formats, list) or not formats or any(f not in _FORMATS for f in formats):
        fail(f"formats must be a nonempty subset of {list(_FORMATS)}", None, "formats")
    out = data.get("output_dir")
    if out is not None and not isinstance(out, str):
        fail("output_dir must be a string", None, "output_dir")

    return RunConfig(
        problem=problem, params=params, tuning=tuning, stopping=stopping, strict_mode=strict,
        output_dir=Path(out) if out else None,
        formats=tuple(f for f in _FORMATS if f in formats), source=source,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:1: cannot read config: {exc.strerror}") from None
    return parse_config(text, source=str(path))


def dump_config(config: RunConfig) -> str:
    data = config.to_dict()
    problem = data["problem"]
    if problem.get("seed") is None:
        problem.pop("seed", None)
    return tomli_w.dumps(data)
