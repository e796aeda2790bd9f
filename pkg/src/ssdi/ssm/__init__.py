from .discretize import DiscretizedPair, discretize
from .pnm import PNMBlock, SSMLayer, pnm_block, selective_scan
from .scan import active_backend, available_backends, ssm_scan, use_backend

__all__ = [
    "discretize", "DiscretizedPair",
    "ssm_scan", "active_backend", "available_backends", "use_backend",
    "SSMLayer", "selective_scan", "PNMBlock", "pnm_block",
]
