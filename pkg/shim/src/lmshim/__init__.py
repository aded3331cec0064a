from .backends import Backend, NGramBackend, TransformersBackend, load_backend
from .config import Precision, ShimConfig
from .server import create_app

__all__ = ["Backend", "NGramBackend", "TransformersBackend", "load_backend",
           "Precision", "ShimConfig", "create_app"]
__version__ = "0.1.0"
