"""Parser module deals with loading and validating run configuration files.

A configuration is a JSON document with one section per toolkit module. The
user file is merged over ``data/default.config.json`` and validated against
``data/config.schema.json``; unknown keys are errors.

    >>> config = load_config("labo.config.json", ["--budget", "10"])
"""
import os
import json
import copy
from jsonschema import Draft7Validator

import LABOToolkit
from LABOToolkit.utils import ConfigError

with open(os.path.join(LABOToolkit.__path__[0],'data/config.schema.json')) as schema:
    CONFIG_SCHEMA = json.load(schema)

with open(os.path.join(LABOToolkit.__path__[0],'data/default.config.json')) as defaults:
    DEFAULT_CONFIG = json.load(defaults)

SECTIONS = tuple(DEFAULT_CONFIG)


def default_config():
    """A fresh copy of the default configuration."""
    return copy.deepcopy(DEFAULT_CONFIG)


def deep_merge(base,update):
    """Recursively merges update into a copy of base.

    Dictionaries merge key by key, every other value is replaced.
    """
    merged = copy.deepcopy(base)
    for key,value in update.items():
        if isinstance(value,dict) and isinstance(merged.get(key),dict):
            merged[key] = deep_merge(merged[key],value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def config_errors(data):
    """Messages of every schema violation, sorted by location."""
    validator = Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.path))
    messages = []
    for e in errors:
        location = ".".join(str(x) for x in e.path)
        messages.append(f"{location}: {e.message}" if location else e.message)
    return messages


def validateconfig(data):
    """Validates a complete configuration.

    Raises:
        ConfigError: listing every violation
    """
    messages = config_errors(data)
    if messages:
        raise ConfigError("Invalid config\n" + "\n".join(messages))
    return data


def parse_value(text):
    """JSON value of an override, or the plain string when it is not JSON."""
    try:
        return json.loads(text)
    except (json.JSONDecodeError,TypeError):
        return text


def resolve_key(key):
    """(section, name) of an override key.

    ``section.name`` is taken as given; a bare ``name`` must occur in exactly
    one section.
    """
    key = key.replace("-","_")
    if "." in key:
        section, name = key.split(".",1)
        if section not in DEFAULT_CONFIG or name not in DEFAULT_CONFIG[section]:
            raise ConfigError(f"unknown config key {key}")
        return section, name
    owners = [s for s in SECTIONS if key in DEFAULT_CONFIG[s]]
    if not owners:
        raise ConfigError(f"unknown config key {key}")
    if len(owners) > 1:
        raise ConfigError(f"config key {key} is ambiguous, use one of " + ", ".join(f"{s}.{key}" for s in owners))
    return owners[0], key


def apply_overrides(data,overrides):
    """Applies ``--key value`` pairs to a configuration dictionary.

    Args:
        data (dict): configuration, left untouched
        overrides (list): alternating ``--key`` and ``value`` strings; also
            accepts ``--key=value``

    Returns:
        dict: the updated copy
    """
    data = copy.deepcopy(data)
    items = list(overrides)
    i = 0
    while i < len(items):
        token = items[i]
        if not token.startswith("--"):
            raise ConfigError(f"expected --key, got {token}")
        token = token[2:]
        if "=" in token:
            key, value = token.split("=",1)
            i += 1
        else:
            if i + 1 >= len(items):
                raise ConfigError(f"missing value for --{token}")
            key, value = token, items[i+1]
            i += 2
        section, name = resolve_key(key)
        data.setdefault(section,{})[name] = parse_value(value)
    return data


def read_config(filepath):
    """Reads a JSON configuration file.

    Raises:
        ConfigError: if the file is missing or not JSON
    """
    if not os.path.isfile(filepath):
        raise ConfigError(f"No config file at {filepath}")
    with open(filepath,'r') as configfile:
        try:
            data = json.load(configfile)
        except json.JSONDecodeError as ex:
            raise ConfigError(f"{filepath} is not valid JSON: {ex}") from ex
    if not isinstance(data,dict):
        raise ConfigError(f"{filepath} must hold a JSON object")
    return data


def complete(data):
    """Defaults merged under data, then validated."""
    return validateconfig(deep_merge(DEFAULT_CONFIG,data or {}))


def load_config(filepath=None,overrides=()):
    """Configuration from a file (or the defaults) with overrides applied.

    Returns:
        dict: the validated configuration
    """
    data = read_config(filepath) if filepath is not None else {}
    return complete(apply_overrides(deep_merge(DEFAULT_CONFIG,data),overrides))


def write_default(filepath):
    """Writes the default configuration, as ``LABO init`` does."""
    with open(filepath,'w') as configfile:
        json.dump(DEFAULT_CONFIG,configfile,indent=4)
