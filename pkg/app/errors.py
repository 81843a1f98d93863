import json

import click


class DomixError(Exception):
    """Base class for every error raised by the library."""


class ShapeError(DomixError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = shapes
        rendered = " and ".join(str(tuple(shape)) for shape in shapes)
        super().__init__(f"{op}: incompatible shapes {rendered}")


class ConfigError(DomixError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class SimplexError(DomixError):
    pass


class AttentionMaskError(DomixError):
    pass


class CorpusError(DomixError):
    pass


class CheckpointError(DomixError):
    pass


class VocabMismatchError(DomixError):
    def __init__(self, expected_hash, actual_hash):
        self.expected_hash = expected_hash
        self.actual_hash = actual_hash
        super().__init__(
            f"Vocabulary mismatch: checkpoint vocab {expected_hash} != supplied vocab {actual_hash}"
        )


class TrainingDivergedError(DomixError):
    def __init__(self, step, breakdown):
        self.step = step
        self.breakdown = breakdown
        super().__init__(f"Non-finite loss at step {step}: {breakdown}")


def abort_command(title, message, status=1):
    """Echo a JSON error envelope on stderr and stop the current command."""
    click.echo(json.dumps({"error": title, "message": str(message)}), err=True)
    raise SystemExit(status)
