"""
Configuration files.

YAML files are composed with hydra, so command-line overrides use hydra syntax (``key=value``, ``+key=value``). JSON files are loaded with omegaconf and merged with the same overrides as a dotlist. In both cases the resolved container is built into the expected config class by :class:`~aweforge.serialization.Serializer`; nested mappings without a ``'__type__'`` key are built as the annotated type of their field.
"""

import dataclasses
import json
import logging
import typing
from importlib import import_module
from pathlib import Path
from typing import Any, Optional, Sequence, Type, Union

import hydra
from hydra.errors import HydraException
from jztools.validation import checked_get_single
from omegaconf import DictConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from .errors import AweForgeError, ConfigurationError
from .serialization import Serializer

PRESETS_DIR = Path(__file__).parent / "conf"
YAML_SUFFIXES = (".yaml", ".yml")

logger = logging.getLogger(__name__)


def import_parser_modules(modules):
    if modules:
        [
            import_module(_module)
            for _module in map(str.strip, checked_get_single(modules).split(","))
            if _module
        ]


def presets():
    return sorted(_x.stem for _x in PRESETS_DIR.glob("*.yaml"))


def resolve_config_path(path_or_preset: Union[str, Path]) -> Path:
    """
    The path itself when it exists, else the built-in preset of that name.
    """
    if (path := Path(path_or_preset)).exists():
        return path
    if (preset := PRESETS_DIR / f"{path_or_preset}.yaml").exists():
        return preset
    raise ConfigurationError(
        f"No config file `{path_or_preset}` and no such preset ({', '.join(presets())})."
    )


def _compose_yaml(path: Path, overrides: Sequence[str]) -> DictConfig:
    path = path.absolute()
    # compose() leaves logging untouched, unlike hydra.main().
    with hydra.initialize_config_dir(config_dir=str(path.parent), version_base=None):
        return hydra.compose(config_name=path.stem, overrides=list(overrides))


def _load_json(path: Path, overrides: Sequence[str]) -> DictConfig:
    try:
        cfg = OmegaConf.create(json.loads(path.read_text()))
    except json.JSONDecodeError as err:
        raise ConfigurationError(f"Invalid JSON in {path}: {err}") from err
    return OmegaConf.merge(cfg, OmegaConf.from_dotlist([_x.lstrip("+") for _x in overrides]))


def _optional_of(hint):
    if typing.get_origin(hint) is Union:
        args = [_x for _x in typing.get_args(hint) if _x is not type(None)]
        return args[0] if len(args) == 1 else None
    return hint


def with_signatures(value, hint, serializer: Serializer):
    """
    Adds the ``'__type__'`` key to every untyped mapping whose field is annotated with a serializable dataclass.
    """
    hint = _optional_of(hint)
    if not isinstance(value, dict) or not (isinstance(hint, type) and dataclasses.is_dataclass(hint)):
        return value
    hints = typing.get_type_hints(hint)
    out = {
        _key: with_signatures(_value, hints.get(_key), serializer) for _key, _value in value.items()
    }
    if "__type__" not in out:
        out = {"__type__": serializer.get_signature(hint), **out}
    return out


def _root_cause(err: BaseException) -> BaseException:
    while err.__cause__ is not None:
        if isinstance(err, AweForgeError):
            break
        err = err.__cause__
    return err


def build_config(container: Any, expected_type: Type, serializer: Optional[Serializer] = None):
    """
    Builds a config object from its serializable container. Validation errors of nested objects surface as :class:`ConfigurationError`.
    """
    serializer = serializer or Serializer()
    try:
        return serializer.from_serializable(
            with_signatures(container, expected_type, serializer), expected_type
        )
    except AweForgeError:
        raise
    except Exception as err:
        cause = _root_cause(err)
        if isinstance(cause, AweForgeError):
            raise cause
        raise ConfigurationError(
            f"Invalid {expected_type.__name__} configuration: {cause}"
        ) from err


def load_config(
    path_or_preset: Union[str, Path],
    expected_type: Type,
    overrides: Sequence[str] = (),
    serializer: Optional[Serializer] = None,
):
    path = resolve_config_path(path_or_preset)
    try:
        if path.suffix in YAML_SUFFIXES:
            cfg = _compose_yaml(path, overrides)
        elif path.suffix == ".json":
            cfg = _load_json(path, overrides)
        else:
            raise ConfigurationError(f"Expected a *.yaml or *.json config file, received {path}.")
        OmegaConf.resolve(cfg)
        container = OmegaConf.to_container(cfg)
    except (HydraException, OmegaConfBaseException) as err:
        raise ConfigurationError(f"Could not load {path}: {err}") from err
    logger.debug("Loaded config %s with overrides %s.", path, list(overrides))
    return build_config(container, expected_type, serializer)


def dump_config(config, path: Union[str, Path]):
    Serializer().dump(config, path, indent=2)
