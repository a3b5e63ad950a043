"""Exception hierarchy shared by every kobalab module."""


class KobalabError(Exception):
    """Base class for all library errors."""


class NotInterior(KobalabError, ValueError):
    """A point that must lie inside the domain does not."""


class EmptyIntersection(KobalabError):
    """No interior point of a domain/window intersection was found."""


class NotConvex(KobalabError):
    """Operation requires a domain flagged as convex."""


class NotCConvex(KobalabError):
    """Operation requires a domain flagged as C-convex."""


class OutsideBall(KobalabError, ValueError):
    pass


class OutsideBidisc(KobalabError, ValueError):
    pass


class SegmentExitsDomain(KobalabError):
    """A polyline segment leaves the domain."""


class NoDiniWindow(KobalabError):
    """Points are not inside the domain's declared Dini-smooth window."""


class Disconnected(KobalabError):
    """Query points cannot be joined through the geometric graph."""


class SpliceSegmentExits(KobalabError):
    """The chord used to splice a path leaves the domain."""


class PathExitsWindow(KobalabError):
    """A path expected to stay in a ball window leaves it."""


class UnknownMap(KobalabError, KeyError):
    pass


class ParseError(KobalabError, ValueError):
    """Invalid scenario or domain document.

    ``errors`` is a list of ``(path, message)`` pairs where ``path`` is a
    dotted location of the offending field.
    """

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [("", errors)]
        self.errors = list(errors)
        msg = "; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors)
        super().__init__(msg)
