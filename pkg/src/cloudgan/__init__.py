"""Spatial-attention GAN toolkit for cloud removal from paired satellite images.

Subpackages cover the full workflow: RICE1-style paired dataset handling
(:mod:`cloudgan.data`), the recurrent spatial attention blocks
(:mod:`cloudgan.attention`), generator/discriminator assembly
(:mod:`cloudgan.networks`), losses and PSNR/SSIM metrics
(:mod:`cloudgan.losses`, :mod:`cloudgan.metrics`), the adversarial training
loop with checkpointing (:mod:`cloudgan.training`), a heuristic cloud-mask
detector over band stacks (:mod:`cloudgan.clouddetect`), and a CLI
(:mod:`cloudgan.cli`).
"""

__version__ = "0.1.0"
