"""Exception hierarchy shared across the package."""


class DataError(Exception):
    """Invalid or inconsistent input data (images, manifests, databases)."""


class EmptyMaskError(DataError):
    """Raised when a lesion mask contains no true pixels."""


class LesionNotContainedError(DataError):
    """Raised when the lesion mask touches the image border."""


class AedbError(DataError):
    """Base class for embedding-file format errors."""


class AedbBadMagic(AedbError):
    pass


class AedbVersionMismatch(AedbError):
    pass


class AedbTruncated(AedbError):
    pass


class AedbDuplicateIds(AedbError):
    pass
