"""Line-oriented run configuration: strict parsing, explicit defaults.

The format is ``key = value`` with ``#`` comments.  Unknown keys,
duplicate keys and unparsable values are hard errors carrying the line
number, so a campaign config that parses is exactly the campaign that
runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

__all__ = ["ConfigError", "RunConfig", "parse_config", "COMMANDS"]

COMMANDS = (
    "critical-tilt",
    "heteroclinic",
    "phase-portrait",
    "simulate",
    "crossing-stats",
    "validate",
    "appendix-checks",
)


class ConfigError(ValueError):
    """Configuration text or values are invalid."""


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


@dataclass
class RunConfig:
    """Fully resolved configuration for one command invocation."""

    command: str = ""
    gamma: float = 0.1
    epsilon: float = 1e-4
    nu: float = 0.44
    dt: float | None = None          # derived from the step-size rule if unset
    t_max: float | None = None
    n_trials: int = 10_000
    k_max: int = 12
    master_seed: int = 12345
    epsilon_list: list[float] = field(default_factory=lambda: [1e-3, 1e-4, 1e-5])
    eta_list: list[float] = field(default_factory=lambda: [1e-2, 3e-3, 1e-3])
    gamma_list: list[float] = field(
        default_factory=lambda: [round(0.02 * i, 2) for i in range(1, 16)])
    output_dir: str = "out"
    n_grid: int = 4097
    scaling_n_grid: int = 8193
    portrait_grid: int = 24
    tol_alpha: float = 1e-10
    tol_orbit: float = 1e-8

    def validate(self) -> "RunConfig":
        if not self.command:
            raise ConfigError("empty command: pass a subcommand or set 'command ='")
        if self.command not in COMMANDS:
            raise ConfigError(
                f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        positives = ["gamma", "epsilon", "nu", "n_trials", "k_max", "n_grid",
                     "scaling_n_grid", "portrait_grid", "tol_alpha", "tol_orbit"]
        for name in positives:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("dt", "t_max"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigError(f"{name} must be positive when set, got {val!r}")
        for name in ("epsilon_list", "eta_list", "gamma_list"):
            vals = getattr(self, name)
            if not vals or any(v <= 0 for v in vals):
                raise ConfigError(f"{name} must be a non-empty list of positive values")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")
        return self

    def as_header_lines(self) -> list[str]:
        """Resolved key=value lines embedded at the top of every artifact."""
        out = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, list):
                val = ",".join(repr(v) for v in val)
            out.append(f"{f.name} = {val}")
        return out


_PARSERS = {
    "command": str,
    "gamma": float,
    "epsilon": float,
    "nu": float,
    "dt": float,
    "t_max": float,
    "n_trials": int,
    "k_max": int,
    "master_seed": int,
    "epsilon_list": _parse_float_list,
    "eta_list": _parse_float_list,
    "gamma_list": _parse_float_list,
    "output_dir": str,
    "n_grid": int,
    "scaling_n_grid": int,
    "portrait_grid": int,
    "tol_alpha": float,
    "tol_orbit": float,
}


def parse_config(text: str, command: str | None = None,
                 overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` configuration text into a validated RunConfig.

    ``command`` (from the command line) takes precedence over a
    ``command =`` line; ``overrides`` are applied last (command-line
    flags beat the file).
    """
    cfg = RunConfig()
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        try:
            parsed = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: cannot parse {key!r}: {exc}") from None
        setattr(cfg, key, parsed)
    if command:
        cfg.command = command
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg.validate()
