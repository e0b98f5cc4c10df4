"""Natural versus IFGSM-trained networks on two-moons.

Trains one network of each kind per seed and reports test accuracy clean,
under FGSM and under 10-step IFGSM.
"""

from frmomentum.acceptance import adversarial_pair

for seed in (1, 2, 3):
    rows = adversarial_pair(seed)
    for kind in ("natural", "adversarial"):
        accs = "  ".join(f"{r.attack_name}={r.accuracy:.3f}" for r in rows[kind])
        print(f"seed {seed} {kind:>11}: {accs}")
