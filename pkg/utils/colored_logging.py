import logging
from os import environ
from sys import exit, platform, stderr
from typing import Any, Mapping, NoReturn, overload

from termcolor import colored
try:
    from termcolor._types import Attribute, Color
except ImportError:  # termcolor >= 3 dropped the private `_types` module and takes plain strings
    Attribute = Color = str  # type: ignore[misc]

LOGLEVEL_COLORS: dict[int, tuple[Color, list[Attribute]]] = {
    logging.DEBUG: ("white", []),
    logging.INFO: ("cyan", []),
    logging.WARNING: ("yellow", []),
    logging.ERROR: ("red", []),
    logging.CRITICAL: ("red", ["bold"]),
}

LOG_FORMAT = f"[%(asctime)s] %(levelname)s ({colored('%(name)s', 'dark_grey')}) %(message)s"
LOG_DATEFMT = f"{colored('%H:%M:%S', attrs=['bold'])}"

_quiet = False


def init_logging_colors() -> None:
    """Enables ANSI colors on legacy Windows consoles (through colorama) and colors the
    level names used by `logging`."""
    if platform == "win32" and "WT_SESSION" not in environ:
        try:
            from colorama import just_fix_windows_console

            just_fix_windows_console()
        except ImportError:
            environ["NO_COLOR"] = "1"
            print_warning("colorama is not installed, no colors on the legacy Windows console")

    for level, (color, attrs) in LOGLEVEL_COLORS.items():
        logging.addLevelName(level, colored(logging.getLevelName(level), color, attrs=attrs))


def setup_logging(verbose: int = 0, silent: bool = False) -> None:
    """`-v` shows progress (INFO), `-vv` everything (DEBUG), `--silent` only errors and
    also mutes `print_info` / `print_success` / `print_scores`."""
    global _quiet
    _quiet = silent
    init_logging_colors()
    level = logging.ERROR if silent else [logging.WARNING, logging.INFO][min(verbose, 1)]
    if verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, datefmt=LOG_DATEFMT, force=True)


def print_log(
    msg: str,
    /,
    *,
    prefix_char: str = "*",
    color: Color = "cyan",
    attrs: list[Attribute] = [],
    **kwargs: Any,
) -> None:
    print(f"[{colored(prefix_char, color, attrs=attrs)}] {msg}", **kwargs)


def print_info(msg: str, /, **kwargs: Any) -> None:
    if not _quiet:
        print_log(msg, prefix_char="*", color="cyan", **kwargs)


def print_success(msg: str, /, **kwargs: Any) -> None:
    if not _quiet:
        print_log(msg, prefix_char="+", color="green", **kwargs)


def print_warning(msg: str, /, **kwargs: Any) -> None:
    print_log(f"Warning: {msg}", prefix_char="!", color="yellow", file=stderr, **kwargs)


@overload
def print_error(msg: str, /, *, exit_code: int, **kwargs: Any) -> NoReturn: ...
@overload
def print_error(msg: str, /, *, exit_code: None = ..., **kwargs: Any) -> None: ...


def print_error(msg: str, /, *, exit_code: int | None = None, **kwargs: Any) -> None:
    print_log(f"Error: {msg}", prefix_char="!", color="red", file=stderr, **kwargs)
    if exit_code is not None:
        exit(exit_code)


def print_scores(title: str, scores: Mapping[str, Mapping[str, float]]) -> None:
    """Prints a `metric | P | R | F1` table, eg. for an evaluation report's `to_dict()`."""
    if _quiet:
        return
    print_log(colored(title, attrs=["bold"]), prefix_char="+", color="green")
    print(f"    {'metric':<12} {'P':>8} {'R':>8} {'F1':>8}")
    for metric, triple in scores.items():
        if not isinstance(triple, Mapping):
            continue
        print(f"    {metric:<12} {triple['p']:>8.4f} {triple['r']:>8.4f} {triple['f1']:>8.4f}")
