import argparse
from typing import List, Tuple


def parse_pair(text: str) -> Tuple[float, float]:
    """Parse "x,y" into a float pair (argparse `type=` hook)."""
    try:
        x, y = (float(part) for part in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from exc
    return x, y


def parse_float_list(text: str) -> List[float]:
    """Parse "1,2,3" into floats (argparse `type=` hook)."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def format_number(value: float) -> str:
    """Print integral floats without a trailing '.0' ("80" rather than "80.0")."""
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def format_pair(pair) -> str:
    return f"{format_number(pair[0])},{format_number(pair[1])}"
