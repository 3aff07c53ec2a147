"""
Reward Audit Toolkit
Sanity checks for reinforcement-learning reward functions
"""

__version__ = "1.0.0"
