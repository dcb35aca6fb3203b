"""Built-in task functions; importing this package registers them."""

from . import bench, ptycho, stream, tomo

__all__ = ["bench", "ptycho", "stream", "tomo"]
