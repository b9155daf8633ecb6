"""Exception hierarchy shared by all modules."""


class IsacError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(IsacError, ValueError):
    """Invalid or unparsable scenario configuration."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class GeometryError(IsacError, ValueError):
    """Coincident points or otherwise undefined geometry."""


class ContractError(IsacError, ValueError):
    """A documented precondition was violated by the caller."""


class Infeasible(IsacError):
    """The user-SINR requirement cannot be met.

    ``reason`` is ``"interference-limited"`` or ``"power-limited"``.
    """

    def __init__(self, reason, detail=""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class DegenerateVoxel(IsacError):
    """The voxel direction lies inside the nulled subspace of some AP."""

    def __init__(self, voxel, ap):
        self.voxel = voxel
        self.ap = ap
        super().__init__(f"voxel {voxel}: AP {ap} has no component outside the nulled subspace")


class DegenerateSolution(IsacError):
    """A relaxed solution carries no usable dominant direction."""


class NotApplicable(IsacError):
    """The requested closed form does not apply to this model."""
