"""Multi-view shape reconstruction at toy scale.

Each view is rasterized to a silhouette+depth image and encoded to a fixed
length vector; encodings are pooled by an element-wise maximum, so the set
of views is order-free and can grow at inference time.  A decoder turns the
pooled encoding into the weights of a small point-mapping network that
carries unit-ball samples onto the predicted surface.
"""

__version__ = "0.1.0"
