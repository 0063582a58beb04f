"""Generalized hamming networks on a small numpy autodiff engine."""
from .algebra import fuzziness, fuzzy_xor, ghd, ghd_inverse, ghd_vec, mean_pairwise_ghd
from .layers import Network, NetworkSpec, cifar_spec, mnist_spec

__version__ = "0.1.0"

__all__ = [
    "Network", "NetworkSpec", "cifar_spec", "fuzziness", "fuzzy_xor", "ghd", "ghd_inverse",
    "ghd_vec", "mean_pairwise_ghd", "mnist_spec",
]
