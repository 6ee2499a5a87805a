"""Typed failures, split by who has to act on them.

AudioReadError: the input file is missing or unreadable.
ConfigError: the job description itself is wrong (unknown model,
    layer out of range, bad identifiers).
BackendUnavailableError: the environment lacks what the backend
    needs (model weights, optional packages).
WriteError: the computed embedding violates an output invariant.
"""


class ExtractorError(Exception):
    """Base class for all failures raised by this package."""


class AudioReadError(ExtractorError):
    pass


class ConfigError(ExtractorError):
    pass


class BackendUnavailableError(ExtractorError):
    pass


class WriteError(ExtractorError):
    pass
