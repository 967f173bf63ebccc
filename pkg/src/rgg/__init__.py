"""Red/green/gray revalidation of motion-planning roadmaps under moving obstacles."""

__version__ = "0.1.0"
