"""Layout-conditioned 360-degree depth toolkit.

Equirectangular (ERP) geometry, floor-plan and terrain rasterization,
closed-form fusion of per-view monocular depth with coarse layout depth,
depth/image metrics and point-cloud export.
"""

__version__ = "0.1.0"
