"""Exception hierarchy shared by the front-ends and the detection layer."""


class MalgramError(Exception):
    """Base class for every error raised by this package."""


class Incompatible(MalgramError):
    """Two object types have no common upper bound in the type poset."""

    def __init__(self, a, b):
        super().__init__(f"incompatible object types: {a.value} / {b.value}")
        self.a = a
        self.b = b


class GrammarParseError(MalgramError):
    def __init__(self, message, line=0, column=0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ValidationError(MalgramError):
    """A grammar failed well-formedness or LL(1)/L-attributed validation."""

    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(str(f) for f in self.findings) or "invalid grammar")


class ConflictError(MalgramError):
    """The parse table would contain two entries for one (nonterminal, terminal)."""


class CatalogError(MalgramError):
    pass


class ConfigError(MalgramError):
    pass


class TraceSyntaxError(MalgramError):
    def __init__(self, message, line=0, column=0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ScriptSyntaxError(MalgramError):
    def __init__(self, message, line=0):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ExplorationBudgetExceeded(MalgramError):
    pass


class UnsupportedCipher(MalgramError):
    pass


class WholeBodyCipher(UnsupportedCipher):
    """The script body itself is ciphered; only string-level ciphers are handled."""


class UnknownScenario(MalgramError):
    pass
