"""Exception types shared across the package."""


class HeadercastError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParams(HeadercastError, ValueError):
    """A parameter violates its documented range or a cross-field relationship."""


class InsufficientBudget(HeadercastError):
    """The per-period bit budget cannot accommodate even one signature packet."""


class TooLarge(HeadercastError):
    """An exhaustive enumeration would exceed the configured outcome bound."""


class BadLength(HeadercastError, ValueError):
    """A wire buffer or byte field has the wrong length."""


class HeightMismatch(HeadercastError):
    """Two headers were link-checked at non-adjacent heights."""


class BadLink(HeadercastError):
    """A header's parent digest does not match the held parent header."""


class BadSignature(HeadercastError):
    """A signature record failed verification or its trust preconditions."""


class UnknownServer(HeadercastError):
    """A server id that is not present in the configured key table."""
