"""Chunked sparse arrays with iterative fixpoint queries."""

from ._itarray import (
    Array,
    ItarrayError,
    bench,
    coadd,
    detection_labels,
    diff_count,
    generate_images,
    kmeans,
    load,
    loads,
    save,
    sigmaclip,
    sourcedetect,
)

__all__ = [
    "Array",
    "ItarrayError",
    "bench",
    "coadd",
    "detection_labels",
    "diff_count",
    "generate_images",
    "kmeans",
    "load",
    "loads",
    "save",
    "sigmaclip",
    "sourcedetect",
]
