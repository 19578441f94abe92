"""Patch-based k-NN detection of surgical instruments on operating-table images.

Two tasks share one machinery: static segmentation of instruments against
the table background, and detection of instruments that appeared or
disappeared between a 'before' and an 'after' frame.
"""

from .dynamic_detect import (ActionPair, ChangeMap, DynamicParams, best_match, build_change_bank,
                             change_descriptor, detect_appearance, detect_changes, detect_disappearance)
from .evaluation import AzScore, aggregate_scores, roc_az, roc_curve
from .features import (IntegralStats, PatchRect, build_channel_stack, descriptor_distance,
                       patch_descriptor)
from .imaging import (downsample2, load_image, load_mask, luminance, rgb_to_hsv, save_image,
                      save_mask, sobel_magnitude)
from .knn import IndexParams, KnnIndex, LabeledPoint, PointSet, brute_force_knn, build_index, query_regress
from .optimize import IntParam, ParamSpace, SwarmConfig, dpso_optimize, random_grid_search
from .static_detect import (DetectParams, ReferenceBank, Sample, ScaleLadder, build_reference_bank,
                            patch_label, scale_sizes, segment)

__version__ = "0.1.0"
