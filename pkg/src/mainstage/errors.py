"""Exception hierarchy shared by the whole toolkit.

The CLI maps these onto exit codes: usage problems exit 1, DataError
subclasses exit 2, NumericError exits 3.
"""


class MainstageError(Exception):
    pass


class DataError(MainstageError):
    """Malformed or inconsistent input data."""


class FormatError(DataError):
    """Corrupt container: bad RIFF header, bad tensor magic, truncation."""


class UnsupportedCodecError(DataError):
    """A WAV encoding we deliberately do not decode (mu-law, ADPCM, ...)."""


class EmptyAudioError(DataError):
    """No samples, or fewer samples than one analysis frame."""


class ConfigError(DataError):
    """A configuration that cannot be honored (e.g. filter spans no FFT bin)."""


class ManifestError(DataError):
    """Duplicate clip ids, split leakage, or invalid labels in a manifest."""


class NumericError(MainstageError):
    """Non-finite value produced where the pipeline requires finite math."""
