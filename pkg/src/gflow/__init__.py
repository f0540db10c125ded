"""Ground filtering for airborne LiDAR point clouds.

The data path: tile a cloud into overlapping cylindrical patches, radially
compress each patch's periphery while leaving an inner disk intact, project
sparse-voxel elevation statistics onto the central points, classify them
with a pluggable point classifier (a from-scratch multi-task toy MLP is
included), soft-vote the overlapping predictions back into one labeling,
and score the result with IoU/OA and DTM RMSE.
"""

__version__ = "0.1.0"

from .core import Bounds2, ClassLabel, LabeledCloud, Point3, bounds, read_cloud, write_cloud

__all__ = [
    "__version__",
    "Bounds2",
    "ClassLabel",
    "LabeledCloud",
    "Point3",
    "bounds",
    "read_cloud",
    "write_cloud",
]
