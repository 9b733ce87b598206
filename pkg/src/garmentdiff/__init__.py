"""garmentdiff: sketch+text garment image generation at desk scale.

Fabric swatch retrieval, gated cross-modal conditioning, and a small
deterministic diffusion model, built on a self-contained numpy autodiff
core so every piece is gradient-checked and reproducible.
"""

__version__ = "0.1.0"
