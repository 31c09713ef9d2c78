"""Variational dual objectives for KL and JS divergences, their parameter
gradients, and the witness-gradient fields that drive particle transport.

The KL witness network h maps R^d -> R and is scored by
mean_q h - log mean_pi exp(h). The JS critic is trained directly in
discriminator form: the network outputs h'(x) in (0, 1) through a final
sigmoid and is scored by mean_q log(1 - h') / 2 + mean_pi log(h') / 2, which
equals JS(q, pi) - log 2 at the optimum. Where transport needs the witness h
itself, it is recovered by h = log((1 - h') / 2) / 2.
"""

from dataclasses import dataclass

import numpy as np

from .nn import AdamState, Mlp, adam_step, sgd_step

__all__ = [
    "DualCritic",
    "kl_dual_objective",
    "kl_dual_grads",
    "js_dual_objective",
    "js_dual_grads",
    "dual_objective",
    "dual_grads",
    "h_from_hprime_grad",
    "witness_values_and_grads",
    "critic_update",
]


@dataclass
class DualCritic:
    """Dual function wrapped with divergence-specific objective logic.

    kind "kl": net outputs h(x) in R (identity final activation).
    kind "js": net outputs h'(x) in (0, 1) (sigmoid final activation); raw
    outputs are clamped into [clamp_eps, 1 - clamp_eps] before any log.
    """

    kind: str
    net: Mlp
    clamp_eps: float = 1e-5

    def __post_init__(self):
        if self.kind not in ("kl", "js"):
            raise ValueError(f"unknown divergence kind {self.kind!r}")
        if self.net.out_dim != 1:
            raise ValueError("critic network must have scalar output")
        if not 0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must be in (0, 0.5)")


def _scalar_forward(net, X):
    """Forward a batch through a scalar-output net; returns ((n,), tape)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out, tape = net.forward(X)
    return out[:, 0], tape


def _check_batches(xs_q, xs_pi):
    if len(xs_q) == 0 or len(xs_pi) == 0:
        raise ValueError("batches must be nonempty")


def _log_mean_exp(h):
    """log mean exp with max subtraction; finite for |h| up to ~1e300."""
    m = h.max()
    return float(m + np.log(np.mean(np.exp(h - m))))


def kl_dual_objective(critic, xs_q, xs_pi):
    """mean_q h - log mean_pi exp(h)."""
    _check_batches(xs_q, xs_pi)
    h_q, _ = _scalar_forward(critic.net, xs_q)
    h_pi, _ = _scalar_forward(critic.net, xs_pi)
    return float(h_q.mean()) - _log_mean_exp(h_pi)


def kl_dual_grads(critic, xs_q, xs_pi):
    """Gradient of kl_dual_objective in the critic's params() order.

    The conjugate term's gradient is the softmax-weighted mean of grad_W h
    over the pi batch (exact gradient of log mean exp).
    """
    _check_batches(xs_q, xs_pi)
    h_q, tape_q = _scalar_forward(critic.net, xs_q)
    h_pi, tape_pi = _scalar_forward(critic.net, xs_pi)
    n_q = h_q.shape[0]
    w = np.exp(h_pi - h_pi.max())
    w /= w.sum()
    gq, _ = critic.net.backward(tape_q, np.full((n_q, 1), 1.0 / n_q))
    gp, _ = critic.net.backward(tape_pi, -w[:, None])
    return [a + b for a, b in zip(gq, gp)]


def _clamped_hprime(critic, X):
    """(clamped h', tape, in-range mask). Outside the clamp the derivative
    of the clamped output is zero."""
    raw, tape = _scalar_forward(critic.net, X)
    eps = critic.clamp_eps
    clamped = np.clip(raw, eps, 1.0 - eps)
    active = (raw > eps) & (raw < 1.0 - eps)
    return clamped, tape, active


def js_dual_objective(critic, xs_q, xs_pi):
    """mean_q log(1 - h') / 2 + mean_pi log(h') / 2 with h' clamped.

    Equals -log 2 for the constant critic h' = 1/2; the -log 2 offset against
    JS(q, pi) is left in place since only gradients matter for training.
    """
    _check_batches(xs_q, xs_pi)
    hq, _, _ = _clamped_hprime(critic, xs_q)
    hp, _, _ = _clamped_hprime(critic, xs_pi)
    return float(0.5 * np.mean(np.log(1.0 - hq)) + 0.5 * np.mean(np.log(hp)))


def js_dual_grads(critic, xs_q, xs_pi):
    """Gradient of js_dual_objective in the critic's params() order."""
    _check_batches(xs_q, xs_pi)
    hq, tape_q, act_q = _clamped_hprime(critic, xs_q)
    hp, tape_pi, act_p = _clamped_hprime(critic, xs_pi)
    dy_q = np.where(act_q, -0.5 / (len(hq) * (1.0 - hq)), 0.0)
    dy_p = np.where(act_p, 0.5 / (len(hp) * hp), 0.0)
    gq, _ = critic.net.backward(tape_q, dy_q[:, None])
    gp, _ = critic.net.backward(tape_pi, dy_p[:, None])
    return [a + b for a, b in zip(gq, gp)]


def dual_objective(critic, xs_q, xs_pi):
    if critic.kind == "kl":
        return kl_dual_objective(critic, xs_q, xs_pi)
    return js_dual_objective(critic, xs_q, xs_pi)


def dual_grads(critic, xs_q, xs_pi):
    if critic.kind == "kl":
        return kl_dual_grads(critic, xs_q, xs_pi)
    return js_dual_grads(critic, xs_q, xs_pi)


def h_from_hprime_grad(critic, x):
    """Witness value and input gradient recovered from a JS critic.

    h = log((1 - h') / 2) / 2 and grad_x h = -grad_x h' / (2 (1 - h')), with
    h' clamped into [eps, 1 - eps]. Accepts a vector or a stack.
    """
    if critic.kind != "js":
        raise ValueError("h_from_hprime_grad requires a JS critic")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    hp, tape, active = _clamped_hprime(critic, X)
    h = 0.5 * np.log((1.0 - hp) / 2.0)
    dy = np.where(active, -0.5 / (1.0 - hp), 0.0)
    _, dx = critic.net.backward(tape, dy[:, None])
    if single:
        return float(h[0]), dx[0]
    return h, dx


def witness_values_and_grads(critic, x):
    """(h(x), grad_x h(x)) for either divergence kind, batched.

    For KL this is the raw network and its input gradient; for JS it goes
    through the h' change of variable. This shared field is what both
    particle methods follow.
    """
    if critic.kind == "js":
        return h_from_hprime_grad(critic, x)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    h, tape = _scalar_forward(critic.net, X)
    _, dx = critic.net.backward(tape, np.ones((X.shape[0], 1)))
    if single:
        return float(h[0]), dx[0]
    return h, dx


def critic_update(critic, xs_q, xs_pi, steps, eta, optimizer="sgd", opt_state=None):
    """Run `steps` ascent steps on the kind-appropriate dual objective.

    Mutates the critic network in place (callers must hold exclusive access)
    and returns the dual objective evaluated after the final step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    params = critic.net.params()
    for _ in range(steps):
        g = dual_grads(critic, xs_q, xs_pi)
        if optimizer == "sgd":
            sgd_step(params, [-gi for gi in g], eta)
        elif optimizer == "adam":
            if opt_state is None:
                raise ValueError("adam requires an AdamState")
            adam_step(params, [-gi for gi in g], opt_state, eta)
        else:
            raise ValueError(f"unknown optimizer {optimizer!r}")
    return dual_objective(critic, xs_q, xs_pi)
