"""Closed-form pointwise formulas shared by the numpy and numba kernels.

Every function works on floats and on numpy arrays alike. None of them calls
another, so each can be compiled by numba on its own.
"""
import numpy as np


def sigmoid(u):
    return 1.0 / (1.0 + np.exp(-u))


def logit(y):
    return np.log(y / (1.0 - y))


def bv(z, alpha):
    # expm1 keeps the difference accurate near z = 0
    return np.expm1(alpha * z) - np.expm1(-(1.0 - alpha) * z)


def bv_prime(z, alpha):
    return alpha * np.exp(alpha * z) + (1.0 - alpha) * np.exp(-(1.0 - alpha) * z)


def f_active_logit(u, y, gamma):
    # f_A written in the transformed variable u = logit(y)
    return u + gamma * (2.0 * y - 1.0)


def f_active_logit_du(y, gamma):
    return 1.0 + 2.0 * gamma * y * (1.0 - y)


def f_elec(y, kappa):
    return np.log(y) - kappa * np.log(1.0 - 2.0 * y)


def f_elec_dy(y, kappa):
    return 1.0 / y + 2.0 * kappa / (1.0 - 2.0 * y)


def n_tot(y, c0, kappa):
    return c0 / (1.0 + 2.0 * (kappa - 1.0) * y)


def n_tot_dy(y, c0, kappa):
    a = 2.0 * (kappa - 1.0)
    d = 1.0 + a * y
    return -c0 * a / (d * d)


def n_salt(y, c0, kappa):
    return c0 * y / (1.0 + 2.0 * (kappa - 1.0) * y)


def n_salt_dy(y, c0, kappa):
    d = 1.0 + 2.0 * (kappa - 1.0) * y
    return c0 / (d * d)


def ngam(y, c0, kappa):
    """n_tot(y) * Gamma_E(y), the common factor of D_E and S_E."""
    return c0 / (1.0 + 2.0 * (kappa - 1.0) * y) * (1.0 + 2.0 * kappa * y / (1.0 - 2.0 * y))


def ngam_dy(y, c0, kappa):
    g = 1.0 + 2.0 * kappa * y / (1.0 - 2.0 * y)
    dg = 2.0 * kappa / ((1.0 - 2.0 * y) * (1.0 - 2.0 * y))
    a = 2.0 * (kappa - 1.0)
    d = 1.0 + a * y
    return -c0 * a / (d * d) * g + c0 / d * dg


def crowd(y, gamma):
    """(1 - y) Gamma_A(y) in its regular form."""
    return 1.0 + 2.0 * gamma * y * (1.0 - y)


def crowd_dy(y, gamma):
    return 2.0 * gamma * (1.0 - 2.0 * y)
