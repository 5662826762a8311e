"""
Line-oriented run configuration.

Grammar::

    # comment (also allowed after a value)
    [section]
    key = value

Values are decimal or scientific numbers, whitespace- or comma-separated
number lists, or bare words. Every line is validated against a fixed schema;
parsing reports all problems at once, each with its line number.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .errors import InvalidParameterError

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_INT = re.compile(r"^[+-]?\d+$")


class ConfigError(InvalidParameterError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(self.errors))


# value kinds -------------------------------------------------------------

def _float(text):
    if not _NUMBER.match(text):
        raise ValueError(f"expected a number, got {text!r}")
    return float(text)


def _int(text):
    if not _INT.match(text):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(text)


def _floats(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("expected a list of numbers")
    return tuple(_float(p) for p in parts)


def _ints(text):
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    if not parts:
        raise ValueError("expected a list of integers")
    return tuple(_int(p) for p in parts)


def _word(text):
    if not re.match(r"^[A-Za-z_][\w.-]*$", text):
        raise ValueError(f"expected a name, got {text!r}")
    return text


def _bool(text):
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def positive(v):
    vals = v if isinstance(v, tuple) else (v,)
    return None if all(x > 0 for x in vals) else "must be positive"


def non_negative(v):
    vals = v if isinstance(v, tuple) else (v,)
    return None if all(x >= 0 for x in vals) else "must be non-negative"


def at_least(n):
    def check(v):
        vals = v if isinstance(v, tuple) else (v,)
        return None if all(x >= n for x in vals) else f"must be at least {n}"
    return check


def one_of(*choices):
    def check(v):
        return None if v in choices else f"must be one of {', '.join(choices)}"
    return check


def between(lo, hi):
    def check(v):
        return None if lo <= v <= hi else f"must lie in [{lo}, {hi}]"
    return check


@dataclass(frozen=True)
class Key:
    kind: object
    default: object = None
    check: object = None


MODELS = ("harmonic", "free", "rotation", "oscillator", "tbh")

SCHEMA = {
    "run": {
        "seed": Key(_int, 0, non_negative),
        "name": Key(_word, "run"),
    },
    "model": {
        "name": Key(_word, "harmonic", one_of(*MODELS)),
        "kappa": Key(_float, 1.0, positive),
        "omega": Key(_float, 1.0),
        "dim": Key(_int, 1, between(1, 2)),
        "beta": Key(_float, 1.0, positive),
        "Lambda": Key(_int, 3, at_least(1)),
        "k_res": Key(_int, 1, at_least(1)),
    },
    "provider": {
        "kind": Key(_word, "auto", one_of("auto", "closed", "montecarlo", "tabulated")),
        "count": Key(_int, 100_000, at_least(20)),
    },
    "lagrangian": {
        "delta_t": Key(_float, 1.0, positive),
        "w_rev": Key(_float, 1.0, non_negative),
    },
    "grid": {
        "lower": Key(_floats, (-4.0,)),
        "upper": Key(_floats, (4.0,)),
        "spacing": Key(_floats, None, positive),
        "points": Key(_ints, None, at_least(16)),
    },
    "geometry": {},
    "identities": {
        "lam": Key(_floats, (1.0, 0.5)),
        "lam_dot": Key(_floats, None),
        "count": Key(_int, 100_000, at_least(10_000)),
        "decomp_inputs": Key(_int, 10_000, non_negative),
    },
    "harmonic": {
        "kappa": Key(_float, 1.0, positive),
        "u0": Key(_float, 1.0),
        "delta_t": Key(_float, 1.0, positive),
        "t_restart": Key(_float, 1.5, positive),
        "horizon": Key(_float, 5.0, positive),
        "step": Key(_float, 0.01, positive),
        "weight_times": Key(_floats, (0.5, 1.0, 2.0, 3.0), positive),
        "u_lower": Key(_float, -1.5),
        "u_upper": Key(_float, 2.0),
        "u_points": Key(_int, 351, at_least(3)),
        "fig3_T": Key(_float, 5.0, positive),
    },
    "extremal": {
        "lam0": Key(_floats, (1.0,)),
        "lamT": Key(_floats, (1.0,)),
        "T": Key(_float, 1.0, positive),
        "n_nodes": Key(_int, 2000, at_least(8)),
        "tol": Key(_float, 1e-4, positive),
    },
    "closure": {
        "lam0": Key(_floats, (1.0,)),
        "T": Key(_float, 1.0, positive),
        "lower": Key(_floats, (0.3,)),
        "upper": Key(_floats, (1.0,)),
        "points": Key(_ints, (15,), at_least(3)),
        "n_nodes": Key(_int, 200, at_least(8)),
    },
    "propagate": {
        "start": Key(_floats, (1.0,)),
        "steps": Key(_int, 3, at_least(1)),
        "n_sub": Key(_int, 50, at_least(1)),
    },
    "steady": {
        "n_sub": Key(_int, 50, at_least(1)),
        "tol": Key(_float, 1e-12, positive),
        "max_iter": Key(_int, 10_000, at_least(1)),
        "spectrum": Key(_int, 5, at_least(0)),
    },
    "weaknoise": {
        "guess": Key(_floats, (0.1,)),
        "lam0": Key(_floats, (1.0,)),
        "T": Key(_float, 5.0, positive),
        "dt": Key(_float, 1e-3, positive),
        "om_trials": Key(_int, 0, non_negative),
    },
    "pde-check": {
        "start": Key(_floats, (1.0,)),
        "width": Key(_float, 0.04, positive),
        "T": Key(_float, 1.0, positive),
        "n_subs": Key(_ints, (10, 20, 40), at_least(1)),
        "dt_pde": Key(_float, 5e-5, positive),
        "steady_n_sub": Key(_int, 50, at_least(1)),
    },
    "appendix-b": {
        "n_sub": Key(_int, 20, at_least(1)),
        "trials": Key(_int, 50, at_least(10)),
        "support": Key(_float, 0.5, between(0.05, 1.0)),
        "confinement_factor": Key(_float, 2.0, positive),
    },
}


@dataclass
class RunConfig:
    sections: dict
    text_hash: str
    present: set = field(default_factory=set)

    def __getitem__(self, section):
        return self.sections[section]

    def get(self, section, key):
        return self.sections[section][key]


def parse_config(text):
    """Parse and validate configuration text.

    Returns a ``RunConfig`` with defaults filled in; raises ``ConfigError``
    listing every problem with its line number.
    """
    errors = []
    values = {s: {} for s in SCHEMA}
    seen = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"^\[([^\]]+)\]$", line)
        if m:
            name = m.group(1).strip()
            if name not in SCHEMA:
                errors.append(f"line {lineno}: unknown section [{name}]")
                section = None
            else:
                section = name
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {line!r}")
            continue
        key, value = (p.strip() for p in line.split("=", 1))
        if section is None:
            if not any(e.startswith(f"line {lineno}") for e in errors):
                errors.append(f"line {lineno}: key {key!r} outside a known section")
            continue
        spec = SCHEMA[section].get(key)
        if spec is None:
            errors.append(f"line {lineno}: unknown key {key!r} in [{section}]")
            continue
        if (section, key) in seen:
            errors.append(f"line {lineno}: duplicate key {key!r} in [{section}] (first on line {seen[section, key]})")
            continue
        seen[section, key] = lineno
        if not value:
            errors.append(f"line {lineno}: {key} has no value")
            continue
        try:
            parsed = spec.kind(value)
        except ValueError as exc:
            errors.append(f"line {lineno}: {key}: {exc}")
            continue
        if spec.check is not None:
            problem = spec.check(parsed)
            if problem:
                errors.append(f"line {lineno}: {key} = {value} {problem}")
                continue
        values[section][key] = parsed
    errors.extend(_cross_checks(values, seen))
    if errors:
        raise ConfigError(errors)
    sections = {s: {k: values[s].get(k, spec.default) for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    digest = hashlib.sha256(text.encode()).hexdigest()[:16]
    return RunConfig(sections, digest, set(seen))


def _cross_checks(values, seen):
    errors = []
    grid = values["grid"]
    lower = grid.get("lower", SCHEMA["grid"]["lower"].default)
    upper = grid.get("upper", SCHEMA["grid"]["upper"].default)
    line = seen.get(("grid", "upper"), seen.get(("grid", "lower"), 0))
    if len(lower) != len(upper):
        errors.append(f"line {line}: grid lower and upper need the same number of entries")
    elif any(a >= b for a, b in zip(lower, upper)):
        errors.append(f"line {line}: grid lower must be below upper in every dimension")
    if "spacing" in grid and "points" in grid:
        errors.append(f"line {seen['grid', 'points']}: give either spacing or points, not both")
    h = values["harmonic"]
    if "t_restart" in h or "horizon" in h:
        tr = h.get("t_restart", SCHEMA["harmonic"]["t_restart"].default)
        hz = h.get("horizon", SCHEMA["harmonic"]["horizon"].default)
        if not tr < hz:
            line = seen.get(("harmonic", "t_restart"), seen.get(("harmonic", "horizon")))
            errors.append(f"line {line}: t_restart must be below horizon")
    return errors


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
