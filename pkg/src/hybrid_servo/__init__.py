"""Adaptive hybrid visual servoing with an eye-in-hand and a fixed RGBD camera."""

__version__ = "0.1.0"
