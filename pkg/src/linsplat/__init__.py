"""Tile-based splat rasterization with swappable attenuation kernels."""
from .kernel import KernelFamily, KernelSpec
from .geometry import Camera, Scene, Scene2D
from .rasterizer import RenderSettings, rasterize
from .trainer import TrainConfig, fit2d, fit3d

__version__ = "0.1.0"
