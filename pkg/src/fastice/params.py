"""Physical parameters and model switches.

Defaults are the standard values for sea ice with icebergs of 200 m
height. ``delta_min`` defaults to 2e-9 1/s; set it to 1e-9 for the
alternative value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .errors import ConfigurationError

OCEAN_DRAG_MODES = ("quadratic", "linearized")
STRENGTH_SIGNS = ("hibler", "printed")


@dataclass(frozen=True)
class RheologyParams:
    P_star: float = 27.5e3  # N/m^2
    C: float = 20.0
    delta_min: float = 2e-9  # 1/s
    strength_sign: str = "hibler"

    def __post_init__(self):
        if min(self.P_star, self.C, self.delta_min) <= 0:
            raise ConfigurationError("rheology parameters must be positive")
        if self.strength_sign not in STRENGTH_SIGNS:
            raise ConfigurationError(
                f"strength_sign must be one of {STRENGTH_SIGNS}, got {self.strength_sign!r}"
            )


@dataclass(frozen=True)
class DragParams:
    rho: float = 900.0  # sea ice, kg/m^3
    rho_o: float = 1025.0
    rho_a: float = 1.3
    rho_b: float = 900.0  # iceberg
    C_o: float = 5e-4
    C_a: float = 2.5e-4
    C_vo: float = 0.85
    C_va: float = 0.4
    C_i: float = 1.0
    ocean_drag_mode: str = "quadratic"
    C_o_bar: float | None = None  # m/s; None -> C_o * |v_o|
    drag_includes_concentration: bool = False
    berg_drag: str = "explicit"  # or "semi-implicit"

    def __post_init__(self):
        positive = ("rho", "rho_o", "rho_a", "rho_b", "C_o", "C_a", "C_vo", "C_va", "C_i")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.ocean_drag_mode not in OCEAN_DRAG_MODES:
            raise ConfigurationError(
                f"ocean_drag_mode must be one of {OCEAN_DRAG_MODES}, got {self.ocean_drag_mode!r}"
            )
        if self.C_o_bar is not None and self.C_o_bar <= 0:
            raise ConfigurationError("C_o_bar must be positive")
        if self.berg_drag not in ("explicit", "semi-implicit"):
            raise ConfigurationError("berg_drag must be 'explicit' or 'semi-implicit'")

    def linear_drag_coefficient(self, v_o):
        """C_o_bar in m/s, defaulting to C_o times the ocean speed."""
        if self.C_o_bar is not None:
            return self.C_o_bar
        speed = float((v_o[0] ** 2 + v_o[1] ** 2) ** 0.5)
        c = self.C_o * speed
        if c <= 0:
            raise ConfigurationError(
                "linearized ocean drag needs C_o_bar > 0 (ocean at rest and C_o_bar unset)"
            )
        return c


@dataclass(frozen=True)
class Params:
    rheology: RheologyParams = field(default_factory=RheologyParams)
    drag: DragParams = field(default_factory=DragParams)
    h_floor: float = 1e-6  # m, momentum assembly only

    def with_changes(self, **kw):
        """Return a copy with fields of either sub-record replaced by name."""
        rh = {k: v for k, v in kw.items() if k in _names(RheologyParams)}
        dr = {k: v for k, v in kw.items() if k in _names(DragParams)}
        top = {k: v for k, v in kw.items() if k in _names(Params)}
        unknown = set(kw) - set(rh) - set(dr) - set(top)
        if unknown:
            raise ConfigurationError(f"unknown parameter(s): {sorted(unknown)}")
        return replace(
            self,
            rheology=replace(self.rheology, **rh),
            drag=replace(self.drag, **dr),
            **top,
        )


def _names(cls):
    return {f.name for f in fields(cls)}
