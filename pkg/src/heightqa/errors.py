"""Exception hierarchy shared across the pipeline."""


class HeightQAError(Exception):
    """Base class for all errors raised by this package."""


class RasterFormatError(HeightQAError):
    """Malformed or out-of-contract raster bytes (bad magic, length mismatch)."""


class UnsupportedTagError(RasterFormatError):
    """TIFF feature outside the declared subset; message names the offending tag."""


class TruncatedStripError(RasterFormatError):
    """Strip data ends before its declared byte count; message carries the offset."""


class GridInvariantError(HeightQAError):
    """RasterGrid construction violated an invariant (dims, kind, cell size)."""


class DimensionMismatchError(HeightQAError):
    """Grids that must be co-registered have differing dims or cell size."""


class MissingLayerError(HeightQAError):
    """A mandatory bundle layer (height, dem, categories) is absent."""


class OutOfBoundsError(HeightQAError):
    """Coordinate or window outside the grid."""


class NodataError(HeightQAError):
    """Query hit nodata cells where valid data is required."""


class InsufficientDataError(HeightQAError):
    """Not enough valid cells / regions to generate the requested records."""


class TemplateError(HeightQAError):
    """Template catalogue problem: missing task, missing field, too few variants."""


class EndpointError(HeightQAError):
    """Remote endpoint failure."""


class ExhaustedRetriesError(EndpointError):
    """All retry attempts against the endpoint failed."""


class MalformedResponseError(EndpointError):
    """Endpoint reply did not carry the expected text payload."""


class SubmissionError(HeightQAError):
    """Submission references unknown records or is otherwise invalid."""


class BenchmarkError(HeightQAError):
    """Benchmark assembly violation (duplicate ids, task/bench mismatch)."""


class ConfigError(HeightQAError):
    """Pipeline configuration file is invalid."""


class ReviewError(HeightQAError):
    """Verification-stage state violation."""
