import argparse
import logging
from typing import Iterable, List


class Argument:
    """
    Defines an argument that can be added to several parsers, e.g., options shared by many CLI verbs.
    """

    def __init__(self, *args, **kwargs):
        self.args = args
        self.kwargs = kwargs
        self._bound = None

    def bind(self, parser: argparse.ArgumentParser) -> argparse.Action:
        """
        Adds this argument to the specified parser.
        """
        self._bound = parser.add_argument(*self.args, **self.kwargs)
        return self._bound

    def name(self) -> str:
        if not self._bound:
            raise Exception("Cannot retrieve the name of an unbound argument.")
        return self._bound.dest


def bind_all(parser: argparse.ArgumentParser, arguments: Iterable[Argument]) -> List[str]:
    return [_arg.bind(parser).dest for _arg in arguments]


ARGUMENT_LOG_LEVEL = Argument(
    "--log-level",
    default="INFO",
    type=str.upper,
    choices=[logging.getLevelName(_x) for _x in range(logging.DEBUG, logging.CRITICAL + 1, 10)],
    help="Logging level of the aweforge loggers.",
)

ARGUMENT_MODULES = Argument(
    "--modules",
    help=(
        "A list of comma-separated modules (e.g., `--modules='my.module1, my.module2'`, "
        "whitespace optional) to load. This can be used e.g., to register serializable "
        "config classes referenced in configuration files."
    ),
    nargs=1,
)

ARGUMENT_EPOCHS_FROM = Argument(
    "--epochs-from",
    nargs="+",
    default=None,
    metavar="TRACE",
    help=(
        "AWE training traces, or directories searched for `*trace.json` files. Their best epochs "
        "are averaged and used as fixed epoch counts when no validation data is available."
    ),
)

ARGUMENT_OVERRIDES = Argument(
    "overrides",
    nargs="*",
    help="Configuration overrides in Hydra syntax, e.g., `corpus.n_speakers=4 +awe.hidden_dim=32`.",
)
