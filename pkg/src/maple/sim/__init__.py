from .render import render
from .world import FaultPolicy, SimWorld, WorldSpec, load_world

__all__ = ["FaultPolicy", "SimWorld", "WorldSpec", "load_world", "render"]
