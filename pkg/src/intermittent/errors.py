"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid experiment or component configuration.

    ``problems`` holds every individual complaint when several were
    collected before giving up.
    """

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems) if problems else [str(message)]


class OutOfMemory(RuntimeError):
    """An allocation exceeded the capacity of its memory region."""


class LogicError(RuntimeError):
    """An operation was invoked in a state that forbids it."""


class PowerFailure(Exception):
    """Raised inside the device when an injected crash point is reached.

    The engine catches it and turns the device off; nothing after the
    crash point executes.
    """

    def __init__(self, site, occurrence):
        super().__init__(f"crash at {site}#{occurrence}")
        self.site = site
        self.occurrence = occurrence
