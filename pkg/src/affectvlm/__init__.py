"""affectvlm: multiview vision-language facial affect pipeline.

Synthetic 3D/4D face corpora, multiview depth and dynamic-image rendering,
mixed-view augmentation, prompt generation, joint embedding training with a
learnable-margin contrastive + triplet objective, data-parallel workers,
subject-independent cross-validation, and a zero-shot inference service.
"""

__version__ = "0.1.0"
