"""Exchangeable dynamic linear model shared by all atomic series.

Every series uses the same regressor vector, transition matrix and discount
rule; series differ only in their state means and learned observation
scales. Filtering runs in scale-free units (state covariances are expressed
in units of each series' observation variance), which keeps one common
covariance recursion for a complete panel.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import batched_cholesky, nan_column_stats
from .panel import Panel

DEFAULT_DISCOUNT = 0.995


@dataclass(frozen=True)
class DlmSpec:
    """Model structure: local level plus optional sum-to-zero seasonal block."""

    state_dim: int
    regressors: np.ndarray  # (p,)
    transition: np.ndarray  # (p, p)
    discount: float
    seasonal_period: int


def build_dlm_spec(seasonal_period=0, discount=DEFAULT_DISCOUNT):
    """Local-level spec, with seasonal factors when a period >= 2 is given.

    The seasonal block uses the sum-to-zero representation (period - 1 free
    states), so the state dimension is 1 + (period - 1). The transition's
    seasonal block cycles with the period: its period-th power is the
    identity.
    """
    if not 0.0 < discount <= 1.0:
        raise ValueError(f"discount must lie in (0, 1], got {discount}")
    if seasonal_period < 0 or seasonal_period == 1:
        raise ValueError(f"seasonal period must be 0 or >= 2, got {seasonal_period}")
    if seasonal_period == 0:
        p = 1
        F = np.array([1.0])
        G = np.eye(1)
    else:
        s = seasonal_period
        p = s  # 1 level state + (s - 1) seasonal states
        F = np.zeros(p)
        F[0] = 1.0
        F[1] = 1.0
        G = np.zeros((p, p))
        G[0, 0] = 1.0
        G[1, 1:] = -1.0  # next effect = minus the sum of the previous s-1
        for k in range(2, p):
            G[k, k - 1] = 1.0
    return DlmSpec(
        state_dim=p,
        regressors=F,
        transition=G,
        discount=float(discount),
        seasonal_period=int(seasonal_period),
    )


@dataclass
class FilterState:
    """Forward-pass moments. Immutable by convention once built.

    Covariance arrays carry a leading group axis of size 1 when the panel is
    complete (one covariance recursion shared by all series) or size n when
    missing values force per-series recursions.
    """

    spec: DlmSpec
    obs: np.ndarray  # (T, n)
    missing: np.ndarray  # (T, n) bool
    prior_means: np.ndarray  # (T, p, n)
    prior_covs: np.ndarray  # (T, c, p, p)
    post_means: np.ndarray  # (T, p, n)
    post_covs: np.ndarray  # (T, c, p, p)
    forecast_means: np.ndarray  # (T, n)
    forecast_scale: np.ndarray  # (T, c)
    obs_scale: np.ndarray  # (n,) final observation variance estimates
    filtered_residuals: np.ndarray  # (T, n) obs - F' m_t

    @property
    def num_periods(self):
        return self.obs.shape[0]

    @property
    def num_series(self):
        return self.obs.shape[1]

    @property
    def shared_cov(self):
        return self.prior_covs.shape[1] == 1


def _initial_state(spec, obs):
    """Diffuse start: level from the first cycle's mean, seasonal states from
    first-cycle deviations, huge prior covariance."""
    T, n = obs.shape
    p, s = spec.state_dim, spec.seasonal_period
    m0 = np.zeros((p, n))
    window = min(s if s >= 2 else 1, T)
    level = nan_column_stats(obs[:window], ddof=0)[0]
    level = np.where(np.isfinite(level), level, 0.0)
    m0[0] = level
    if s >= 2:
        devs = np.zeros((s, n))
        upto = min(s, T)
        dd = obs[:upto] - level[None, :]
        dd = np.where(np.isfinite(dd), dd, 0.0)
        devs[:upto] = dd
        devs -= devs.mean(axis=0, keepdims=True)
        # state rows 1.. hold effects at calendar positions -1, -2, ..., -(s-1)
        for k in range(1, p):
            m0[k] = devs[(s - k) % s]
    C0 = 1e7 * np.eye(p)
    return m0, C0


def forward_filter(spec, atomic_panel):
    """Discount Kalman filter over all series with shared gains.

    The state evolution covariance is set each step by the discount rule
    W_t = ((1 - delta) / delta) G C_{t-1} G', and per-series observation
    variances are learned by the standard degrees-of-freedom recursion.
    Missing cells skip that series' measurement update, so the affected
    state keeps its inflated prior covariance for the step (this forces
    per-series covariance recursions for the whole pass).
    """
    obs = atomic_panel.values if isinstance(atomic_panel, Panel) else np.asarray(atomic_panel, float)
    if obs.ndim != 2:
        raise ValueError("atomic panel must be 2-dimensional")
    T, n = obs.shape
    p = spec.state_dim
    if T < p:
        raise ValueError(f"need at least {p} observations, got {T}")
    missing = np.isnan(obs)
    if np.isinf(obs).any():
        raise ValueError("non-finite (infinite) observations")
    if missing.all(axis=0).any():
        raise ValueError("a series has no observations at all")
    shared = not missing.any()
    c = 1 if shared else n
    F, G, delta = spec.regressors, spec.transition, spec.discount

    m, C0 = _initial_state(spec, obs)
    C = np.broadcast_to(C0, (c, p, p)).copy()
    s0 = nan_column_stats(obs, ddof=1)[1] ** 2
    s0 = np.where(np.isfinite(s0) & (s0 > 0), s0, 1.0)
    dof = np.ones(n)
    dsum = s0.copy()

    prior_means = np.empty((T, p, n))
    prior_covs = np.empty((T, c, p, p))
    post_means = np.empty((T, p, n))
    post_covs = np.empty((T, c, p, p))
    forecast_means = np.empty((T, n))
    forecast_scale = np.empty((T, c))
    filtered_residuals = np.empty((T, n))

    for t in range(T):
        a = G @ m  # (p, n)
        R = np.einsum("ab,cbd,ed->cae", G, C, G) / delta  # (c, p, p)
        R = 0.5 * (R + R.transpose(0, 2, 1))
        fvec = F @ a  # (n,)
        Rf = R @ F  # (c, p)
        qv = Rf @ F + 1.0  # (c,)
        e = obs[t] - fvec
        observed = ~missing[t]
        e_fill = np.where(observed, e, 0.0)
        A = Rf / qv[:, None]  # (c, p)
        if shared:
            m = a + A[0][:, None] * e_fill[None, :]
            C = (R - qv[0] * np.einsum("cp,cq->cpq", A, A))
        else:
            gain = A.T * e_fill[None, :]  # (p, n)
            m = a + np.where(observed[None, :], gain, 0.0)
            downdate = qv[:, None, None] * np.einsum("cp,cq->cpq", A, A)
            C = R - np.where(observed[:, None, None], downdate, 0.0)
        C = 0.5 * (C + C.transpose(0, 2, 1))
        q_series = qv if not shared else np.full(n, qv[0])
        dof = dof + observed
        dsum = dsum + np.where(observed, e_fill**2 / q_series, 0.0)

        prior_means[t] = a
        prior_covs[t] = R
        post_means[t] = m
        post_covs[t] = C
        forecast_means[t] = fvec
        forecast_scale[t] = qv
        filtered_residuals[t] = obs[t] - F @ m

    return FilterState(
        spec=spec,
        obs=obs,
        missing=missing,
        prior_means=prior_means,
        prior_covs=prior_covs,
        post_means=post_means,
        post_covs=post_covs,
        forecast_means=forecast_means,
        forecast_scale=forecast_scale,
        obs_scale=dsum / dof,
        filtered_residuals=filtered_residuals,
    )


def _apply_batched(mats, vecs):
    """(c, p, p) applied to per-series columns (p, n); c == 1 broadcasts."""
    if mats.shape[0] == 1:
        return mats[0] @ vecs
    return np.einsum("jab,bj->aj", mats, vecs)


def backward_sample(fs, rng):
    """Joint draw of all state paths given the forward pass.

    States are sampled per series with the common backward gain matrices;
    cross-series dependence is carried by the residual covariance model
    downstream, not inside this draw. Returns a (T, p, n) array.
    """
    spec = fs.spec
    T, n = fs.num_periods, fs.num_series
    p = spec.state_dim
    G = spec.transition
    sigma = np.sqrt(fs.obs_scale)  # (n,)

    theta = np.empty((T, p, n))
    L = batched_cholesky(fs.post_covs[T - 1])
    z = rng.standard_normal((p, n))
    theta[T - 1] = fs.post_means[T - 1] + _apply_batched(L, z) * sigma[None, :]
    for t in range(T - 2, -1, -1):
        Rn = fs.prior_covs[t + 1]  # (c, p, p)
        Ct = fs.post_covs[t]
        GC = np.einsum("ab,cbd->cad", G, Ct)
        B = np.linalg.solve(Rn, GC).transpose(0, 2, 1)  # C G' R^{-1}
        Hc = Ct - B @ Rn @ B.transpose(0, 2, 1)
        Hc = 0.5 * (Hc + Hc.transpose(0, 2, 1))
        diff = theta[t + 1] - fs.prior_means[t + 1]
        mean = fs.post_means[t] + _apply_batched(B, diff)
        Lh = batched_cholesky(Hc)
        z = rng.standard_normal((p, n))
        theta[t] = mean + _apply_batched(Lh, z) * sigma[None, :]
    return theta


def forecast_prior(spec, draw, fs, horizon, rng):
    """Forward-simulated prior path: one (horizon x n) draw per state draw.

    States propagate through the transition matrix with evolution noise held
    at the discount-implied level of the final filtered covariance, so a
    discount of 1 gives deterministic propagation.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    F, G, delta = spec.regressors, spec.transition, spec.discount
    n = fs.num_series
    sigma = np.sqrt(fs.obs_scale)
    CT = fs.post_covs[-1]
    Wf = ((1.0 - delta) / delta) * np.einsum("ab,cbd,ed->cae", G, CT, G)
    Wf = 0.5 * (Wf + Wf.transpose(0, 2, 1))
    Lw = batched_cholesky(Wf)
    theta = draw[-1].copy()  # (p, n)
    out = np.empty((horizon, n))
    for h in range(horizon):
        z = rng.standard_normal((spec.state_dim, n))
        theta = G @ theta + _apply_batched(Lw, z) * sigma[None, :]
        out[h] = F @ theta
    return out


def residuals(atomic_panel, draw, spec):
    """Observation minus the state-implied mean at the sampled states."""
    obs = atomic_panel.values if isinstance(atomic_panel, Panel) else np.asarray(atomic_panel, float)
    fitted = np.einsum("p,tpn->tn", spec.regressors, draw)
    if obs.shape != fitted.shape:
        raise ValueError(f"panel shape {obs.shape} does not match draw {fitted.shape}")
    return obs - fitted
