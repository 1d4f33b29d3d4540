"""IRS-assisted, AoI-aware multi-UAV MEC simulator and actor/learner trainer."""

__version__ = "0.1.0"
