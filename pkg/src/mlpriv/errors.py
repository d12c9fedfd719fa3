"""Exception and warning types shared across the package."""


class MlprivError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteError(MlprivError):
    """Input contains NaN or infinite values."""


class AllMaskedError(MlprivError):
    """Pooling requested on a token matrix with no unmasked rows."""


class FormatError(MlprivError):
    """Binary file is malformed (bad magic, truncated payload, bad header)."""


class ShapeMismatchError(MlprivError):
    """Array shapes are inconsistent with the operation's contract."""


class MissingLanguageError(MlprivError):
    """Fewer than two languages available for the requested layer."""


class ZeroNormRowError(MlprivError):
    def __init__(self, index: int, which: str = "X"):
        self.index = index
        super().__init__(f"row {index} of {which} has zero norm")


class DegenerateInputError(MlprivError):
    """Input has no usable variance (e.g. all points identical)."""


class DimensionTooSmallError(MlprivError):
    """Point cloud has fewer than two dimensions."""


class LengthMismatchError(MlprivError):
    """Paired vectors differ in length."""


class TooFewSentencesError(MlprivError):
    """RSA needs at least three rows per matrix."""


class TooFewLanguagesError(MlprivError):
    """Operation needs at least two languages."""


class DomainError(MlprivError):
    """Scalar parameter outside its valid domain."""


class EmptyOrdersError(MlprivError):
    """RDP-to-DP conversion called with no Renyi orders."""


class UnboundedError(MlprivError):
    """Privacy loss is infinite at every available order."""


class UnsatisfiableError(MlprivError):
    """No noise multiplier within the search bracket meets the target epsilon."""


class EmptyBatchError(MlprivError):
    """DP aggregation called with an empty gradient list."""


class OutOfRangeError(MlprivError):
    """Step index outside the training schedule."""


class DivergenceError(MlprivError):
    """Training loss diverged or parameters became non-finite."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"training diverged at step {step}: {detail}")


class UndefinedMarginError(MlprivError):
    """Interpretability margin premise (p > p_2 and p > p_d) fails."""


class InternalConsistencyError(MlprivError):
    """A metric left its analytic range by more than floating-point slack."""


class DegenerateInputWarning(UserWarning):
    """A rank vector or RDM triangle was constant; correlation reported as 0."""
