from .rng import rng_stream

__all__ = ['rng_stream']
