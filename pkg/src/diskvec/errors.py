"""Exception types shared across the package.

Argument/usage problems raise plain ValueError. The classes here cover the
two other failure families the CLI maps to distinct exit codes.
"""


class FormatError(Exception):
    """A file exists but its contents violate the expected binary format."""


class InvariantError(Exception):
    """An internal data-structure invariant was violated (a bug, not bad input)."""
