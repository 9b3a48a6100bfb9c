"""Exception hierarchy shared by every featcross module."""


class FeatcrossError(Exception):
    """Base class for all errors raised by featcross."""


class SchemaError(FeatcrossError, ValueError):
    """Schema document, CSV header and table disagree."""


class MissingLabelColumn(SchemaError):
    pass


class NonBinaryLabel(FeatcrossError, ValueError):
    pass


class DegenerateColumn(FeatcrossError, ValueError):
    """A numerical column has no observed value to derive a fill rule from."""


class StaleBsumError(FeatcrossError, RuntimeError):
    """The b_sum lane was computed for a different solution than the caller expects."""


class ConfigError(FeatcrossError, ValueError):
    pass


class ArtifactError(FeatcrossError):
    """Base class for producer artifact decoding failures."""


class BadMagic(ArtifactError):
    pass


class UnsupportedVersion(ArtifactError):
    pass


class ChecksumError(ArtifactError):
    pass
