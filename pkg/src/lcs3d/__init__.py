"""Transport barriers in three-dimensional flows from Cauchy-Green strain fields."""

from .barriers import BarrierSurface, PlaneFamily, build_surface, match_closed_curves
from .flows import (AbcParams, ForcingSignal, VelocityField, abc_field, chaotic_abc,
                    periodic_abc, steady_abc)
from .integrator import IntegratorConfig, advect, cauchy_green, flow_gradient
from .lines import LineConfig, ReducedLine, extract_lines, integrate_lines
from .strain import (DeformationGrid, eigen_frame, normal_repulsion, sample_plane,
                     shear_normals, tangential_shear)

__version__ = "0.1.0"
