"""AIRL and Hybrid-AIRL inverse reinforcement learning on desk-scale control and poker tasks."""

__version__ = "0.1.0"
