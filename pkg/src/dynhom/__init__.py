"""Coarse-to-fine homography estimation for dynamic scenes.

Subpackages and modules:

- ``geometry``   exact projective algebra and the corner-error metric
- ``imaging``    rasters: warping, pyramids, crops, anaglyphs, PNG I/O
- ``datasynth``  synthetic dynamic scenes, static-clip detection, pair generation
- ``nnruntime``  minimal differentiable tensor runtime (numpy/numba)
- ``models``     multi-scale estimator and its mask-augmented variant
- ``trainer``    losses, training loop, evaluation, RANSAC baseline
- ``cli``        the ``dynhom`` command line
- ``kernels``    numba-accelerated hot loops with a pure-numpy fallback
"""

__version__ = "0.1.0"
