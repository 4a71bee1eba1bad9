"""Exception types shared across the package."""


class DistressError(Exception):
    """Base class for every error raised by distress_screen."""


class DataError(DistressError, ValueError):
    """Input data is malformed, mis-shaped or inconsistent."""


class WavError(DataError):
    pass


class MalformedWavError(WavError):
    """RIFF/WAVE header is truncated or structurally invalid."""


class UnsupportedEncodingError(WavError):
    """WAV payload uses an encoding other than integer PCM or IEEE float."""


class SampleRateError(DataError):
    pass


class DimensionError(DataError):
    pass


class DuplicateIdError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class EmptyTableError(DataError):
    pass


class ChecksumError(DataError):
    pass


class VersionError(DataError):
    def __init__(self, found, expected):
        super().__init__(f"unsupported model format version {found} (expected {expected})")
        self.found = found
        self.expected = expected


class ManifestError(DataError):
    pass
