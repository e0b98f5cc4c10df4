"""Fletcher-Reeves momentum for gradient methods, with the tools to test it.

Modules: ``linalg`` (spectra, condition numbers), ``objectives`` (quadratics,
finite sums, small MLPs), ``optimizers`` (GD, momentum, Nesterov, FRGD/FRSGD,
Adam, FR nonlinear CG), ``theory`` (executable convergence guarantees),
``adversarial`` (FGSM/IFGSM and adversarial training) and ``harness``
(config-driven seeded experiments).
"""

__version__ = "0.1.0"
