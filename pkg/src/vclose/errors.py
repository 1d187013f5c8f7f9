"""Exception hierarchy shared across the toolkit.

Every domain error derives from VCloseError so CLI entry points can catch
one type and render a structured error payload.
"""

from __future__ import annotations


class VCloseError(Exception):
    """Base class for all domain errors raised by this package."""

    code = "error"

    def to_dict(self) -> dict:
        return {"type": self.code, "message": str(self)}


class FileNotReadable(VCloseError):
    code = "file-not-readable"


class VerilogSyntaxError(VCloseError):
    code = "verilog-syntax"

    def __init__(self, file: str, line: int, message: str):
        super().__init__(f"{file}:{line}: {message}")
        self.file = file
        self.line = line
        self.detail = message


class TopModuleNotFound(VCloseError):
    code = "top-module-not-found"


class NoTopModule(VCloseError):
    """Raised when no top module is given and none can be inferred."""

    code = "no-top-module"


class UnknownFile(VCloseError):
    code = "unknown-file"


class UnknownSignal(VCloseError):
    code = "unknown-signal"


class UnresolvedInstance(VCloseError):
    """An instantiated module has no definition among the parsed files."""

    code = "unresolved-instance"

    def __init__(self, module: str, instance: str, parent: str):
        super().__init__(
            f"instance '{instance}' of undefined module '{module}' in '{parent}'"
        )
        self.module = module
        self.instance = instance
        self.parent = parent


class MixedContext(VCloseError):
    """A statement group mixes fragments from unrelated enclosing blocks."""

    code = "mixed-context"


class TemplateMissing(VCloseError):
    code = "template-missing"

    def __init__(self, construct: str):
        super().__init__(f"no patching template registered for construct '{construct}'")
        self.construct = construct


class TemplateFormatError(VCloseError):
    code = "template-format"


class UnparseableResult(VCloseError):
    """Patched output failed the internal re-parse validity check."""

    code = "unparseable-result"


class UnrecognizedFormat(VCloseError):
    code = "unrecognized-format"


class NoItems(VCloseError):
    code = "no-items"


class NoSeedsFound(VCloseError):
    code = "no-seeds-found"

    def __init__(self, item_id: int, reason: str = ""):
        detail = f": {reason}" if reason else ""
        super().__init__(f"no seed signals derivable for coverage item {item_id}{detail}")
        self.item_id = item_id


class MissingSection(VCloseError):
    code = "missing-section"


class DuplicateSection(VCloseError):
    code = "duplicate-section"


class FieldError(VCloseError):
    code = "field-error"

    def __init__(self, message: str, line: int | None = None):
        at = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{at}")
        self.line = line


class ProtocolUnsupported(VCloseError):
    code = "protocol-unsupported"


class SkeletonFormatError(VCloseError):
    code = "skeleton-format"


class FrozenRegionViolation(VCloseError):
    """LLM output altered one or more frozen skeleton regions."""

    code = "frozen-region-violation"

    def __init__(self, region_ids: list[str], attempts: int = 0):
        super().__init__(
            f"frozen regions violated after {attempts} attempt(s): {', '.join(region_ids)}"
        )
        self.region_ids = list(region_ids)
        self.attempts = attempts


class LLMUnavailable(VCloseError):
    code = "llm-unavailable"


class BudgetTooSmall(VCloseError):
    """Context budget cannot fit even the coverage item's own module."""

    code = "budget-too-small"


class SimulatorUnavailable(VCloseError):
    code = "simulator-unavailable"


class EmptyResults(VCloseError):
    code = "empty-results"
