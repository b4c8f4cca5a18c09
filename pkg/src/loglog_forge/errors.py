"""Error types. Every error carries a short kebab-case ``code`` that the CLI
prints verbatim on stderr."""


class ForgeError(Exception):
    code = "forge-error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def __str__(self):
        msg = super().__str__()
        return f"{self.code}: {msg}" if msg != self.code else msg


def _make(name: str, code: str):
    return type(name, (ForgeError,), {"code": code})


AdmissibilityViolation = _make("AdmissibilityViolation", "admissibility-violation")
GridTooCoarse = _make("GridTooCoarse", "grid-too-coarse")
GridMismatch = _make("GridMismatch", "grid-mismatch")
SupportViolation = _make("SupportViolation", "support-violation")
ParameterOutOfRange = _make("ParameterOutOfRange", "parameter-out-of-range")
NoBracket = _make("NoBracket", "no-bracket")
BTooLarge = _make("BTooLarge", "b-too-large")
InsufficientSamples = _make("InsufficientSamples", "insufficient-samples")
NegativeSlope = _make("NegativeSlope", "negative-slope")
PlateauNotFlat = _make("PlateauNotFlat", "plateau-not-flat")
WronskianDegenerate = _make("WronskianDegenerate", "wronskian-degenerate")
EigensolverNoConvergence = _make("EigensolverNoConvergence", "eigensolver-no-convergence")
ResolutionTooCoarse = _make("ResolutionTooCoarse", "resolution-too-coarse")
NoConvergence = _make("NoConvergence", "no-convergence")
OutOfNeighborhood = _make("OutOfNeighborhood", "out-of-neighborhood")
InsufficientHistory = _make("InsufficientHistory", "insufficient-history")
ConditionUnsatisfiable = _make("ConditionUnsatisfiable", "condition-unsatisfiable")
LinearSolveFailure = _make("LinearSolveFailure", "linear-solve-failure")
NanDetected = _make("NanDetected", "nan-detected")
ModulationLost = _make("ModulationLost", "modulation-lost")
NonpositiveLambda = _make("NonpositiveLambda", "nonpositive-lambda")
TrackingMissing = _make("TrackingMissing", "tracking-missing")
NoBlowUpTrend = _make("NoBlowUpTrend", "no-blow-up-trend")
WindowExceedsGrid = _make("WindowExceedsGrid", "window-exceeds-grid")
ConfigError = _make("ConfigError", "config-error")
