"""Independent brute-force oracles for the inference tests.

Everything here is computed by dense tensor-product quadrature straight from
the model definition (design matrix, prior precision, hyperprior density),
sharing no code with the inference module's Laplace/AGHQ/grid machinery.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss

LOG_2PI = np.log(2.0 * np.pi)


def _gl(lo, hi, n):
    x, w = leggauss(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * x, half * w


def _mesh(bounds, nodes):
    axes = [_gl(lo, hi, nodes) for lo, hi in bounds]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)  # (K, d)
    wgrids = np.meshgrid(*[np.log(a[1]) for a in axes], indexing="ij")
    logw = np.sum(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, logw


def _log_joint(gammas, a, q, n, s):
    eta = gammas @ a.T  # (K, cells)
    log_sig = -np.logaddexp(0.0, -eta)
    log_sig_neg = -np.logaddexp(0.0, eta)
    ll = log_sig @ s + log_sig_neg @ (n - s)
    d = q.shape[0]
    sign, logdet = np.linalg.slogdet(q)
    quad = 0.5 * np.einsum("ki,ij,kj->k", gammas, q, gammas)
    return ll - quad + 0.5 * logdet - 0.5 * d * LOG_2PI


def quadrature_fixed(a, q, n, s, *, nodes=None, span=9.0):
    """Evidence and per-coordinate posterior moments at fixed prior precision.

    Dense Gauss-Legendre quadrature of the Bernoulli-likelihood integrand
    over a box of +- span prior/posterior standard deviations.
    """
    d = q.shape[0]
    nodes = nodes or {1: 400, 2: 160, 3: 90}[d]
    sd = np.sqrt(np.diag(np.linalg.inv(q)))
    bounds = [(-span * sd_i - 6.0, span * sd_i + 6.0) for sd_i in sd]
    pts, logw = _mesh(bounds, nodes)
    lj = _log_joint(pts, a, q, n, s) + logw
    mx = lj.max()
    f = np.exp(lj - mx)
    z = f.sum()
    evidence = mx + np.log(z)
    mean = pts.T @ f / z
    second = (pts.T**2) @ f / z
    sd_post = np.sqrt(second - mean**2)
    return float(evidence), mean, sd_post


def pc_logprior_internal(x, u=1.0, alpha=0.1):
    """PC prior density on x = log(precision), Jacobian included."""
    rate = -np.log(alpha) / u
    sigma = np.exp(-0.5 * np.asarray(x, dtype=float))
    return np.log(rate) - rate * sigma + np.log(0.5 * sigma)


def quadrature_one_hyper(
    a, q_of_tau, n, s, *, x_range=(-6.0, 9.0), x_nodes=60, inner_nodes=None, span=9.0
):
    """Evidence and latent moments with one free log-precision hyperparameter.

    Outer Gauss-Legendre quadrature over the internal hyperparameter, PC(1,
    0.1) prior; inner dense quadrature per hyperparameter value.
    """
    xs, xw = _gl(*x_range, x_nodes)
    d = a.shape[1]
    ev = np.empty(x_nodes)
    means = np.empty((x_nodes, d))
    seconds = np.empty((x_nodes, d))
    for i, x in enumerate(xs):
        q = q_of_tau(np.exp(x))
        e, m, sd = quadrature_fixed(a, q, n, s, nodes=inner_nodes, span=span)
        ev[i] = e
        means[i] = m
        seconds[i] = sd**2 + m**2
    lp = ev + pc_logprior_internal(xs) + np.log(xw)
    mx = lp.max()
    f = np.exp(lp - mx)
    z = f.sum()
    evidence = mx + np.log(z)
    mean = means.T @ f / z
    second = seconds.T @ f / z
    return float(evidence), mean, np.sqrt(second - mean**2)
