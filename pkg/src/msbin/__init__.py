"""Multiple-expert band-subspace binarization for multispectral document images.

The toolkit turns a stack of co-registered spectral bands into a binary
text mask: bands are contrast-enhanced, an ordered 3-band selection is
converted to gray and binarized by a pluggable kernel inside a
blur/deblur wrapper, per-image best band triples are searched, and the
rare-or-frequent triples across a training set are combined into a
majority-vote expert ensemble.  A cross-validation search picks the
training subset whose ensemble generalizes best.
"""

__version__ = "0.1.0"

from .imgcore import BinaryImage, DatasetManifest, GrayImage, MsImage
from .bandopt import BandTriple, RankedTriples
from .ensemble import ExpertEnsemble
from .kernels import KernelSpec
from .spectral import PreprocessConfig, ToGrayMethod
from .wrapper import WrapperConfig

__all__ = [
    "BandTriple",
    "BinaryImage",
    "DatasetManifest",
    "ExpertEnsemble",
    "GrayImage",
    "KernelSpec",
    "MsImage",
    "PreprocessConfig",
    "RankedTriples",
    "ToGrayMethod",
    "WrapperConfig",
]
