"""Exception types shared across the package."""


class DLTSError(Exception):
    """Base class for all package errors."""


class IllegalMove(DLTSError):
    pass


class InfeasibleSpec(DLTSError):
    pass


class ParseError(DLTSError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append("line %d" % line)
        if where:
            message = "%s: %s" % (":".join(where), message)
        super().__init__(message)


class ShapeMismatch(DLTSError):
    pass


class VersionMismatch(DLTSError):
    pass


class DeadEnd(DLTSError):
    """No legal move exists in a state."""


class InvalidSolution(DLTSError):
    pass


class EmptyDataset(DLTSError):
    pass


class ConfigError(DLTSError):
    pass
