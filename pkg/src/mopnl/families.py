"""Ready-made recurrence families used by tests, examples and the CLI."""

import numpy as np

from .recurrence import RecurrenceFamily

EXAMPLE1_A = np.eye(2)
EXAMPLE1_B = np.array([[-1.0, 0.0], [1.0, -1.0]])
EXAMPLE1_C = np.diag([-1.0, 1.0])


def scalar_chebyshev(a=1.0, b=0.0, G0=None):
    """N = 1 constant family A = C = a, B = b (a = 1, b = 0: z V_m = V_{m+1} + V_{m-1})."""
    return RecurrenceFamily.constant([[a]], [[b]], [[a]], G0=G0, name="scalar-chebyshev")


def example1(shift=0.0, G0=None):
    """The 2x2 constant family A = I, B = [[-1,0],[1,-1]], C = diag(-1,1).

    `shift` adds shift*I to B, translating the spectrum.
    """
    return RecurrenceFamily.constant(
        EXAMPLE1_A, EXAMPLE1_B + shift * np.eye(2), EXAMPLE1_C, G0=G0, name="example1"
    )


def nevai_perturbation(base: RecurrenceFamily, eps=1.0, power=2, B_dir=None):
    """Non-constant family with the limits of `base` and O(m^-power) deviations.

    A_m = A(1 + eps/(m+1)^p), C_m = C(1 + eps/(m+1)^p), B_m = B + eps/(m+1)^p * B_dir,
    which keeps A_m lower and C_m upper triangular.
    """
    A, B, C = base.limits
    Bd = np.eye(base.dim) if B_dir is None else np.asarray(B_dir, dtype=complex)

    def provider(m):
        t = eps / (m + 1) ** power
        return A * (1 + t), B + t * Bd, C * (1 + t)

    return RecurrenceFamily(
        base.dim, provider, limits=base.limits, G0=base.G0, name=f"{base.name}-nevai"
    )


def random_family(dim, rng, scale=0.1, b_scale=1.0):
    """Random constant-class family with well-conditioned triangular A, C."""
    A = np.eye(dim) + scale * np.tril(rng.normal(size=(dim, dim)))
    C = np.eye(dim) + scale * np.triu(rng.normal(size=(dim, dim)))
    B = b_scale * (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return RecurrenceFamily.constant(A, B, C, name="random")


def random_nonconstant_family(dim, rng, length=64, scale=0.1):
    """Tabulated family with independent random coefficients at each index."""
    As, Bs, Cs = [], [], []
    for _ in range(length):
        As.append(np.eye(dim) + scale * np.tril(rng.normal(size=(dim, dim))))
        Cs.append(np.eye(dim) + scale * np.triu(rng.normal(size=(dim, dim))))
        Bs.append(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return RecurrenceFamily.tabulated(As, Bs, Cs, name="random-tabulated")


def mild_nonsymmetric(G0=None):
    """Non-symmetric 2x2 constant family whose limit spectrum avoids 0.

    Both components of V_m(0) grow at comparable rates, which keeps the
    Dirac regularity matrices well conditioned up to large m.
    """
    A = np.array([[1.0, 0.0], [0.3, 1.1]])
    B = np.array([[4.0, 0.5], [0.2, 4.2]])
    C = np.array([[1.0, 0.2], [0.0, 0.9]])
    return RecurrenceFamily.constant(A, B, C, G0=G0, name="mild-nonsymmetric")
