"""Exception hierarchy shared by every stage of the pipeline."""


class CoHijackError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""


class SchemaError(CoHijackError, ValueError):
    """A record does not conform to the interchange schema."""


class MixedSession(CoHijackError):
    pass


class EmptySession(CoHijackError):
    pass


class CorruptTableFile(CoHijackError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class NotHijacked(CoHijackError):
    pass


class TopologyError(CoHijackError):
    pass


class UnknownBras(CoHijackError):
    pass


class UnknownNode(CoHijackError):
    pass


class InvalidScenario(CoHijackError):
    pass


class SessionSetMismatch(CoHijackError):
    def __init__(self, missing_verdicts, missing_truth):
        self.missing_verdicts = sorted(missing_verdicts)
        self.missing_truth = sorted(missing_truth)
        super().__init__(
            f"sessions without verdict: {_preview(self.missing_verdicts)}; "
            f"verdicts without ground truth: {_preview(self.missing_truth)}"
        )


class UnmappedTap(CoHijackError):
    def __init__(self, tags):
        self.tags = sorted(tags)
        super().__init__(f"tap tags missing from BRAS mapping: {', '.join(self.tags)}")


def _preview(ids, limit=10):
    if not ids:
        return "none"
    shown = ", ".join(str(i) for i in ids[:limit])
    if len(ids) > limit:
        shown += f", ... ({len(ids)} total)"
    return shown
