"""Shared exception base for the planning toolkit."""


class PlanningError(Exception):
    """Base class for every domain error raised by this package.

    The command line front end maps any :class:`PlanningError` to exit code 1;
    anything else escaping a module is considered a bug.
    """
