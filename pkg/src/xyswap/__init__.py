"""Exact x-y swap of systems of differentials on rational spectral curves."""

from .curve import DifferentialSystem, SpectralCurve, curve_from_preset, trivial_system
from .graphsum import build_Omega, build_W, tr_via_dual_swap, xy_swap, yx_swap
from .kp import build_kernel, frame_from_kernel, kp_check
from .series import Q, TruncatedSeries

__all__ = [
    "DifferentialSystem", "SpectralCurve", "curve_from_preset", "trivial_system",
    "build_Omega", "build_W", "tr_via_dual_swap", "xy_swap", "yx_swap",
    "build_kernel", "frame_from_kernel", "kp_check", "Q", "TruncatedSeries",
]
