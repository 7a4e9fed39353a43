"""
Numerical engine: Bernoulli diffusion, denoiser, codecs, masked inference, metrics
"""
