"""Exception types shared across the toolkit."""


class ClassdiagError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(ClassdiagError):
    """Invalid input data, schema, or configuration (CLI exit code 2)."""


class DegenerateDataError(ClassdiagError):
    """Numerically degenerate data, e.g. zero Mad or an all-constant
    distance distribution (CLI exit code 3)."""


class UndefinedPairError(ValidationError):
    """A case pair has no comparable feature column, so its Gower
    dissimilarity is undefined."""

    def __init__(self, pairs):
        self.pairs = list(pairs)
        shown = ", ".join(f"({i}, {j})" for i, j in self.pairs[:10])
        more = "" if len(self.pairs) <= 10 else f" and {len(self.pairs) - 10} more"
        super().__init__(
            f"dissimilarity undefined for {len(self.pairs)} pair(s) with no "
            f"comparable column: {shown}{more}"
        )
