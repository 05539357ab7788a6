"""Active speaker detection toolkit.

Dataset interchange format, face-track post-processing, corpus analytics,
audiovisual feature extraction, the two-tower model with static and
recurrent heads, training/evaluation harnesses, a synthetic audiovisual
corpus, and an annotation service.
"""

__version__ = "0.1.0"


def _tune_allocator() -> None:
    """Keep large activation buffers on the heap between training steps.

    Each step allocates and frees hundreds of MB; by default glibc serves
    those via mmap and returns them to the kernel on free, so every batch
    re-faults the pages. Raising the mmap/trim thresholds lets the heap
    recycle them (measured ~2x faster steps). No-op off glibc.
    """
    import ctypes

    M_TRIM_THRESHOLD, M_MMAP_THRESHOLD = -1, -3
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(M_TRIM_THRESHOLD, 1 << 30)
    except (OSError, AttributeError):
        pass


_tune_allocator()
