"""gradsynth: image synthesis with a single robust classifier.

Train a small adversarially robust convolutional classifier, then perform
generation, inpainting, translation, super-resolution, sketch-to-image and
feature painting by projected gradient descent on its class scores and
representation activations.
"""

__version__ = "0.1.0"
