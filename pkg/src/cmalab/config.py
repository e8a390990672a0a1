"""Line-oriented `key = value` configuration files.

Format: one `key = value` per line, `#` starts a comment (whole-line or
trailing), blank lines ignored.  Parsing is schema-driven: every key has a
declared type and default, unknown and duplicate keys are rejected with the
offending line number, and the parsed result always contains *every* key of
the schema so a serialized configuration doubles as a complete manifest.

`parse_config(serialize_config(parse_config(text)))` resolves to the same
dictionary for any valid input (round-trip property; the serialized form is
canonical: schema order, `repr` floats).
"""

import numpy as np


class ConfigError(ValueError):
    """Malformed configuration text or invalid option value."""


_KINDS = ("int", "float", "str", "bool", "floats")


class Option:
    """One schema entry: name, type kind, default, optional constraints.

    `choices` restricts string options; `check` is an optional
    value -> error-message-or-None callable for numeric constraints.
    """

    def __init__(self, name, kind, default, choices=None, check=None):
        if kind not in _KINDS:
            raise ValueError(f"unknown option kind {kind!r}")
        self.name = name
        self.kind = kind
        self.default = default
        self.choices = choices
        self.check = check

    def parse_value(self, text):
        if self.kind == "int":
            try:
                return int(text)
            except ValueError:
                raise ConfigError(f"expected an integer, got {text!r}")
        if self.kind == "float":
            try:
                return float(text)
            except ValueError:
                raise ConfigError(f"expected a number, got {text!r}")
        if self.kind == "bool":
            if text == "true":
                return True
            if text == "false":
                return False
            raise ConfigError(f"expected true or false, got {text!r}")
        if self.kind == "floats":
            parts = [p.strip() for p in text.split(",")]
            if parts == [""]:
                raise ConfigError("expected a comma-separated list of numbers")
            try:
                return tuple(float(p) for p in parts)
            except ValueError:
                raise ConfigError(
                    f"expected a comma-separated list of numbers, got {text!r}"
                )
        # str
        if self.choices is not None and text not in self.choices:
            raise ConfigError(
                f"expected one of {', '.join(self.choices)}; got {text!r}"
            )
        return text

    def format_value(self, value):
        if self.kind == "int":
            return str(int(value))
        if self.kind == "float":
            return repr(float(value))
        if self.kind == "bool":
            return "true" if value else "false"
        if self.kind == "floats":
            return ", ".join(repr(float(v)) for v in value)
        return str(value)


class Schema:
    """Ordered option list plus whole-configuration validators.

    `post` is a list of callables cfg -> error-message-or-None run after all
    keys are resolved (for constraints spanning several keys).
    """

    def __init__(self, options, post=()):
        self.options = list(options)
        self.post = list(post)
        names = [o.name for o in self.options]
        if len(set(names)) != len(names):
            raise ValueError("duplicate option names in schema")
        self._by_name = {o.name: o for o in self.options}

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name):
        return self._by_name[name]


def parse_config(text, schema: Schema):
    """Parse configuration text against `schema`.

    Returns a dict with every schema key present (defaults materialized).
    Raises ConfigError with a line number for syntax errors, unknown or
    duplicate keys, and bad values; semantic cross-key violations are
    reported without a line number.
    """
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key before `=`")
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            cfg[key] = schema[key].parse_value(value)
        except ConfigError as err:
            raise ConfigError(f"line {lineno}: key {key!r}: {err}") from None

    for opt in schema.options:
        if opt.name not in cfg:
            cfg[opt.name] = opt.default

    for opt in schema.options:
        if opt.check is not None:
            msg = opt.check(cfg[opt.name])
            if msg is not None:
                raise ConfigError(f"key {opt.name!r}: {msg}")
    for validate in schema.post:
        msg = validate(cfg)
        if msg is not None:
            raise ConfigError(msg)
    return cfg


def serialize_config(cfg, schema: Schema):
    """Canonical text for a resolved configuration: schema order, one
    `key = value` per line."""
    lines = []
    for opt in schema.options:
        lines.append(f"{opt.name} = {opt.format_value(cfg[opt.name])}")
    return "\n".join(lines) + "\n"


def positive(value):
    if not value > 0:
        return f"must be positive, got {value:g}"
    return None


def nonnegative(value):
    if not value >= 0:
        return f"must be nonnegative, got {value:g}"
    return None


def at_least(bound):
    def check(value):
        if not value >= bound:
            return f"must be at least {bound}, got {value}"
        return None

    return check


def in_open_interval(lo, hi):
    def check(value):
        if not lo < value < hi:
            return f"must lie in ({lo:g}, {hi:g}), got {value:g}"
        return None

    return check


def increasing_from(bound):
    def check(values):
        arr = np.asarray(values, dtype=float)
        if arr.size == 0:
            return "must not be empty"
        if not arr[0] >= bound:
            return f"first entry must be at least {bound:g}, got {arr[0]:g}"
        if np.any(np.diff(arr) <= 0):
            return f"entries must strictly increase, got {list(map(float, arr))}"
        return None

    return check


def all_positive(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return "must not be empty"
    if not np.all(arr > 0):
        return f"entries must all be positive, got {list(map(float, arr))}"
    return None
