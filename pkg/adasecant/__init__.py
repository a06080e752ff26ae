"""Adasecant: adaptive secant step sizes with variance-reduced stochastic gradients."""

from adasecant.services.optimizer import AdasecantOptimizer, OptimizerConfig, adasecant_step

__all__ = ["AdasecantOptimizer", "OptimizerConfig", "adasecant_step"]
