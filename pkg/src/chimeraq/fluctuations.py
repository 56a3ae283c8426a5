"""Gaussian quantum fluctuations about the mean-field trajectory.

Linearizing the dissipative dynamics about the semiclassical amplitudes
``alpha_l(t)`` gives, for the fluctuation operators, the complex-variable
drift

    d(da_l)/dt = (kappa1 - 4 kappa2 |alpha_l|^2) da_l - 2 kappa2 alpha_l^2 da_l*
                 - i (V / 2d) sum_{m in window(l)} da_m

together with per-site diffusion hbar (kappa1 + 4 kappa2 |alpha_l|^2) on both
quadratures.  In the interleaved quadrature basis (q1, p1, ..., qN, pN),
with a = (q + i p) / sqrt(2 hbar), the covariance matrix obeys the Lyapunov
differential equation

    dC/dt = A(t) C + C A(t)^T + B(t).

Two independent integration routes are provided:

* :func:`propagate_covariance` advances the quadrature Lyapunov equation,
* :func:`moment_oracle` advances the complex second moments <a_l a_m> and
  <a_l^dagger a_m> and converts at the end; it exists purely to
  cross-validate the first route.

Both advance the mean field jointly with the fluctuations in a single RK4
state, so stage values of alpha are exact rather than interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    CovarianceMatrix,
    MeanFieldState,
    NetworkParams,
    PhysicalityError,
    coupling_matrix,
    validate_params,
)
from .meanfield import MeanFieldTrajectory, _rhs

#: physicality violations larger than this (in units of hbar) are errors,
#: smaller ones are treated as roundoff
PHYSICALITY_TOL = 1e-9

#: fluctuation horizons beyond this many 1/kappa1 are outside the validated
#: short-time regime and get flagged in run metadata
VALIDATED_HORIZON = 0.5


def symplectic_form(n_sites: int) -> np.ndarray:
    """2N x 2N symplectic form, block-diagonal [[0, 1], [-1, 0]] per site."""
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(n_sites), J)


def physicality_margin(C: np.ndarray, hbar: float = 1.0) -> float:
    """Smallest eigenvalue of C + i hbar Omega / 2.

    Nonnegative (up to roundoff) exactly when C is the covariance of a
    valid Gaussian quantum state; the vacuum saturates zero.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0] // 2
    H = C + 0.5j * hbar * symplectic_form(n)
    return float(np.linalg.eigvalsh(H).min())


def vacuum_covariance(p: NetworkParams, t: float = 0.0) -> CovarianceMatrix:
    """Covariance (hbar/2) I of a tensor product of coherent states."""
    validate_params(p)
    return CovarianceMatrix(t=t, C=0.5 * p.hbar * np.eye(2 * p.N))


@dataclass(frozen=True)
class DriftDiffusion:
    """Drift A and diffusion B of the covariance equation at one instant."""

    t: float
    A: np.ndarray
    B: np.ndarray


def _site_block_coeffs(p: NetworkParams, alphas: np.ndarray):
    """Per-site drift coefficients (m, sr, si) and diffusion diagonal."""
    mag2 = alphas.real**2 + alphas.imag**2
    m = p.kappa1 - 4.0 * p.kappa2 * mag2
    a2 = alphas**2
    sr = -2.0 * p.kappa2 * a2.real
    si = -2.0 * p.kappa2 * a2.imag
    b = p.hbar * (p.kappa1 + 4.0 * p.kappa2 * mag2)
    return m, sr, si, b


def _coupling_drift(p: NetworkParams) -> np.ndarray:
    """Static coupling part of A: (V/2d) [[0, 1], [-1, 0]] per neighbor pair."""
    c = p.V / (2.0 * p.d)
    return np.kron(coupling_matrix(p), np.array([[0.0, c], [-c, 0.0]]))


def _fill_drift(A: np.ndarray, iq, ip, m, sr, si) -> None:
    A[iq, iq] = m + sr
    A[ip, ip] = m - sr
    A[iq, ip] = si
    A[ip, iq] = si


def drift_diffusion(p: NetworkParams, s: MeanFieldState) -> DriftDiffusion:
    """Drift and diffusion matrices of the linearized dynamics at state ``s``.

    A equals the Jacobian of the mean-field equations expressed in
    quadratures; B is diagonal with hbar (kappa1 + 4 kappa2 |alpha_l|^2) on
    both quadratures of site l.
    """
    validate_params(p)
    if s.n_sites != p.N:
        raise ValueError("state length does not match params.N")
    A = _coupling_drift(p)
    iq = 2 * np.arange(p.N)
    m, sr, si, b = _site_block_coeffs(p, s.alphas)
    _fill_drift(A, iq, iq + 1, m, sr, si)
    return DriftDiffusion(t=s.t, A=A, B=np.diag(np.repeat(b, 2)))


@dataclass(frozen=True)
class CovarianceTrajectory:
    """Covariance samples along one mean-field segment.

    ``covs`` has shape (T, 2N, 2N); ``margins`` records the physicality
    margin at each sample.
    """

    times: np.ndarray
    covs: np.ndarray
    params: NetworkParams
    source: MeanFieldTrajectory = field(repr=False)
    margins: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.times.shape[0]

    def cov(self, k: int) -> CovarianceMatrix:
        return CovarianceMatrix(t=float(self.times[k]), C=self.covs[k])

    @property
    def final_cov(self) -> CovarianceMatrix:
        return self.cov(len(self) - 1)

    def min_physicality_margin(self) -> float:
        return float(self.margins.min())


def _substeps(times: np.ndarray, dt: float) -> list[int]:
    subs = []
    for k in range(len(times) - 1):
        span = float(times[k + 1] - times[k])
        n = int(round(span / dt))
        if n < 1 or abs(n * dt - span) > 1e-9 * max(1.0, span):
            raise ValueError(
                f"dt={dt} does not divide the segment spacing {span:g}"
            )
        subs.append(n)
    return subs


def _check_c0(p: NetworkParams, C0: CovarianceMatrix) -> np.ndarray:
    if C0.n_sites != p.N:
        raise ValueError("C0 size does not match params.N")
    margin = physicality_margin(C0.C, p.hbar)
    if margin < -PHYSICALITY_TOL * p.hbar:
        raise PhysicalityError(f"initial covariance unphysical, margin {margin:.3e}")
    return np.array(C0.C)


def propagate_covariance(
    p: NetworkParams,
    mf_segment: MeanFieldTrajectory,
    C0: CovarianceMatrix,
    dt: float = 1e-3,
) -> CovarianceTrajectory:
    """RK4 on the Lyapunov equation dC/dt = A C + C A^T + B.

    The mean field is advanced inside the same RK4 state, starting from the
    segment's first sample; C is recorded on the segment's time grid and
    symmetrized after every step.  ``dt`` must divide the segment spacing.

    Raises:
        PhysicalityError: if a recorded covariance violates the uncertainty
            bound beyond tolerance (linearization breakdown or too-large dt).
    """
    validate_params(p)
    C = _check_c0(p, C0)
    times = mf_segment.times
    subs = _substeps(times, dt)

    K = coupling_matrix(p)
    k1, k2 = p.kappa1, p.kappa2
    cV = p.V / (2.0 * p.d)
    A_coup = _coupling_drift(p)
    iq = 2 * np.arange(p.N)
    ip = iq + 1

    def lyap_rhs(alpha: np.ndarray, Cm: np.ndarray) -> np.ndarray:
        A = A_coup.copy()
        m, sr, si, b = _site_block_coeffs(p, alpha)
        _fill_drift(A, iq, ip, m, sr, si)
        M = A @ Cm
        out = M + M.T
        out.flat[:: 2 * p.N + 1] += np.repeat(b, 2)
        return out

    a = np.array(mf_segment.alphas[0])
    covs = [C.copy()]
    margins = [physicality_margin(C, p.hbar)]
    half = 0.5 * dt
    sixth = dt / 6.0
    for k, n_sub in enumerate(subs):
        for _ in range(n_sub):
            fa1 = _rhs(a, k1, k2, cV, K)
            fc1 = lyap_rhs(a, C)
            a2 = a + half * fa1
            fa2 = _rhs(a2, k1, k2, cV, K)
            fc2 = lyap_rhs(a2, C + half * fc1)
            a3 = a + half * fa2
            fa3 = _rhs(a3, k1, k2, cV, K)
            fc3 = lyap_rhs(a3, C + half * fc2)
            a4 = a + dt * fa3
            fa4 = _rhs(a4, k1, k2, cV, K)
            fc4 = lyap_rhs(a4, C + dt * fc3)
            a = a + sixth * (fa1 + 2.0 * (fa2 + fa3) + fa4)
            C = C + sixth * (fc1 + 2.0 * (fc2 + fc3) + fc4)
            C = 0.5 * (C + C.T)
        margin = physicality_margin(C, p.hbar)
        if margin < -PHYSICALITY_TOL * p.hbar:
            raise PhysicalityError(
                f"covariance unphysical at t={times[k + 1]:g}, margin {margin:.3e}"
            )
        covs.append(C.copy())
        margins.append(margin)

    return CovarianceTrajectory(
        times=np.array(times),
        covs=np.stack(covs),
        params=p,
        source=mf_segment,
        margins=np.asarray(margins),
    )


def moments_to_covariance(s: np.ndarray, n: np.ndarray, hbar: float) -> np.ndarray:
    """Quadrature covariance from complex moments s_lm = <a_l a_m>,
    n_lm = <a_l^dagger a_m> (co-moving frame, zero first moments)."""
    N = s.shape[0]
    eye = np.eye(N)
    C = np.empty((2 * N, 2 * N))
    C[0::2, 0::2] = hbar * (s.real + n.real + 0.5 * eye)
    C[1::2, 1::2] = hbar * (-s.real + n.real + 0.5 * eye)
    C[0::2, 1::2] = hbar * (s.imag + n.imag)
    C[1::2, 0::2] = hbar * (s.imag - n.imag)
    return 0.5 * (C + C.T)


def covariance_to_moments(C: np.ndarray, hbar: float) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`moments_to_covariance`."""
    Cqq = C[0::2, 0::2]
    Cpp = C[1::2, 1::2]
    Cqp = C[0::2, 1::2]
    Cpq = C[1::2, 0::2]
    N = Cqq.shape[0]
    n = (Cqq + Cpp) / (2.0 * hbar) - 0.5 * np.eye(N) + 1j * (Cqp - Cpq) / (2.0 * hbar)
    s = (Cqq - Cpp) / (2.0 * hbar) + 1j * (Cqp + Cpq) / (2.0 * hbar)
    return s, n


def moment_oracle(
    p: NetworkParams,
    mf_segment: MeanFieldTrajectory,
    C0: CovarianceMatrix,
    dt: float = 1e-3,
) -> CovarianceTrajectory:
    """Independent route to the covariance via complex second moments.

    Integrates the closed system

        ds/dt = F s + s F^T + G n + (G n)^T + diag(G)
        dn/dt = F* n + n F^T + G* s + s* G + 2 kappa1 I

    with F the complex drift and G_l = -2 kappa2 alpha_l^2 the squeezing
    coefficients, then converts each sample to quadratures.  Shares nothing
    with :func:`propagate_covariance` beyond the mean-field right-hand side,
    so agreement between the two validates both.
    """
    validate_params(p)
    C = _check_c0(p, C0)
    times = mf_segment.times
    subs = _substeps(times, dt)

    K = coupling_matrix(p)
    k1, k2 = p.kappa1, p.kappa2
    cV = p.V / (2.0 * p.d)
    F_stat = (-1j * cV) * K.astype(complex)
    eyeN = np.eye(p.N)
    gain = 2.0 * k1 * eyeN

    def moment_rhs(alpha, s, n):
        mag2 = alpha.real**2 + alpha.imag**2
        F = F_stat + np.diag(k1 - 4.0 * k2 * mag2)
        G = -2.0 * k2 * alpha**2
        Gn = G[:, None] * n
        ds = F @ s + s @ F.T + Gn + Gn.T + np.diag(G)
        dn = F.conj() @ n + n @ F.T + G.conj()[:, None] * s + s.conj() * G[None, :] + gain
        return ds, dn

    a = np.array(mf_segment.alphas[0])
    s, n = covariance_to_moments(C, p.hbar)
    s = s.astype(complex)
    n = n.astype(complex)
    covs = [moments_to_covariance(s, n, p.hbar)]
    margins = [physicality_margin(covs[0], p.hbar)]
    half = 0.5 * dt
    sixth = dt / 6.0
    for k, n_sub in enumerate(subs):
        for _ in range(n_sub):
            fa1 = _rhs(a, k1, k2, cV, K)
            ds1, dn1 = moment_rhs(a, s, n)
            a2 = a + half * fa1
            fa2 = _rhs(a2, k1, k2, cV, K)
            ds2, dn2 = moment_rhs(a2, s + half * ds1, n + half * dn1)
            a3 = a + half * fa2
            fa3 = _rhs(a3, k1, k2, cV, K)
            ds3, dn3 = moment_rhs(a3, s + half * ds2, n + half * dn2)
            a4 = a + dt * fa3
            fa4 = _rhs(a4, k1, k2, cV, K)
            ds4, dn4 = moment_rhs(a4, s + dt * ds3, n + dt * dn3)
            a = a + sixth * (fa1 + 2.0 * (fa2 + fa3) + fa4)
            s = s + sixth * (ds1 + 2.0 * (ds2 + ds3) + ds4)
            n = n + sixth * (dn1 + 2.0 * (dn2 + dn3) + dn4)
            s = 0.5 * (s + s.T)
            n = 0.5 * (n + n.conj().T)
        C = moments_to_covariance(s, n, p.hbar)
        margin = physicality_margin(C, p.hbar)
        if margin < -PHYSICALITY_TOL * p.hbar:
            raise PhysicalityError(
                f"covariance unphysical at t={times[k + 1]:g}, margin {margin:.3e}"
            )
        covs.append(C)
        margins.append(margin)

    return CovarianceTrajectory(
        times=np.array(times),
        covs=np.stack(covs),
        params=p,
        source=mf_segment,
        margins=np.asarray(margins),
    )


def propagate_frozen(
    A: np.ndarray, B: np.ndarray, C0: np.ndarray, horizon: float, dt: float
) -> np.ndarray:
    """RK4 for dC/dt = A C + C A^T + B with constant coefficients.

    Validation helper: lets tests drive the Lyapunov stepper with arbitrary
    frozen matrices (the full propagator always rebuilds A, B from the
    mean field).
    """
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"dt={dt} does not divide the horizon {horizon}")
    C = np.array(C0, dtype=float)

    def rhs(Cm):
        M = A @ Cm
        return M + M.T + B

    half = 0.5 * dt
    sixth = dt / 6.0
    for _ in range(n):
        k1 = rhs(C)
        k2 = rhs(C + half * k1)
        k3 = rhs(C + half * k2)
        k4 = rhs(C + dt * k3)
        C = C + sixth * (k1 + 2.0 * (k2 + k3) + k4)
        C = 0.5 * (C + C.T)
    return C
