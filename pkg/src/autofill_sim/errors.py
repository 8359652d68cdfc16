"""Exception hierarchy shared by every simulator module."""


class AutofillSimError(Exception):
    """Base class for all simulator errors."""


class SchemaError(AutofillSimError):
    """Input does not have the required structure."""


class InvariantError(AutofillSimError):
    """Input is structurally valid but violates a domain invariant."""


class SceneReferenceError(AutofillSimError):
    """A scene refers to a package, domain or document it does not define."""


class EmptyLabel(AutofillSimError):
    """A signing-key label was empty."""


class ParseError(AutofillSimError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnsupportedTag(ParseError):
    pass


class BadFormIndex(AutofillSimError):
    pass


class MissingSubstitution(AutofillSimError):
    """Fill-on-transmission refused to substitute a placeholder."""


class HostScriptOutsideWebView(AutofillSimError):
    """A host-app script was run in a context that has no hosting app."""


class BadFingerprint(AutofillSimError):
    pass


class UnsupportedContext(AutofillSimError):
    pass


class GateBypassAttempt(AutofillSimError):
    pass


class UnsquattableScheme(AutofillSimError):
    pass


class FixtureMissing(AutofillSimError):
    pass


class GoldenParseError(AutofillSimError):
    pass
