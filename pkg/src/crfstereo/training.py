"""Learning: cross-entropy pretraining of the matching network and joint
max-margin training of the full model through loss-augmented inference.

The joint step treats the labeling decoded after a fixed number of dual
averaging passes as the most violated configuration and differentiates the
margin surrogate with that labeling frozen; masked ground-truth pixels
contribute neither unary nor edge terms to the subgradients.
"""

import logging
from dataclasses import dataclass, fields

import numpy as np

from . import cnn, correlation, crf, model, pairwise

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingError(Exception):
    """Raised on non-finite gradients or unusable training inputs."""


@dataclass
class TrainConfig:
    gamma: float = 1.0
    tau: float = 3.0
    lr_unary: float = 1e-2
    lr_joint: float = 1e-6
    momentum: float = 0.9
    crf_iterations: int = 5
    epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0 or self.tau <= 0:
            raise ValueError("gamma and tau must be positive")
        if self.lr_unary <= 0 or self.lr_joint <= 0:
            raise ValueError("learning rates must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")


def config_from_file(path, **overrides):
    """Flat key=value text file; unknown keys rejected."""
    known = {f.name: f.type for f in fields(TrainConfig)}
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, raw = line.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise ValueError(f"bad config line: {line!r}")
            caster = int if known[key] in (int, "int") else float
            values[key] = caster(raw.strip())
    values.update(overrides)
    return TrainConfig(**values)


def config_to_file(config, path):
    with open(path, "w") as fh:
        for f in fields(TrainConfig):
            fh.write(f"{f.name}={getattr(config, f.name)}\n")


# ---------------------------------------------------------------------------
# Losses.

def target_labels(gt, label_count):
    """Rounded integer targets plus the trainable-pixel mask."""
    rounded = np.where(gt.valid, np.rint(gt.disparity), -1).astype(np.int64)
    mask = gt.valid & (rounded >= 0) & (rounded < label_count)
    return np.where(mask, rounded, 0), mask


@dataclass
class CrossEntropyResult:
    loss: float
    grad_p: np.ndarray
    clamped: int  # pixels whose target probability hit the floor


def cross_entropy(p, gt):
    """Mean negative log-likelihood of the rounded targets; masked pixels
    contribute nothing."""
    labels, mask = target_labels(gt, p.label_count)
    grad = np.zeros_like(p.values)
    count = int(mask.sum())
    if count == 0:
        return CrossEntropyResult(0.0, grad, 0)
    p_target = np.take_along_axis(p.values, labels[:, :, None], axis=2)[:, :, 0]
    clamped = int((mask & (p_target < PROB_FLOOR)).sum())
    if clamped:
        logger.warning("cross_entropy: %d target probabilities clamped to %g",
                       clamped, PROB_FLOOR)
    safe = np.maximum(p_target, PROB_FLOOR)
    loss = float(-(np.log(safe) * mask).sum() / count)
    g_target = np.where(mask, -1.0 / (count * safe), 0.0)
    np.put_along_axis(grad, labels[:, :, None], g_target[:, :, None], axis=2)
    return CrossEntropyResult(loss, grad, clamped)


def truncated_loss(x, gt, tau, label_count=None):
    """Sum over valid pixels of min(|x - round(gt)|, tau)."""
    L = label_count if label_count is not None else int(np.asarray(x).max()) + 1
    labels, mask = target_labels(gt, L)
    diff = np.minimum(np.abs(np.asarray(x) - labels), tau)
    return float((diff * mask).sum())


def loss_augment(prob, gt, gamma, tau):
    """Subtract the scaled truncated loss from the unaries of valid pixels."""
    L = prob.unary.shape[2]
    labels, mask = target_labels(gt, L)
    ks = np.arange(L, dtype=np.float64)
    discount = gamma * np.minimum(np.abs(ks[None, None, :] - labels[:, :, None]), tau)
    unary = prob.unary - np.where(mask[:, :, None], discount, 0.0)
    return crf.CrfProblem(unary, prob.weights, prob.penalty)


# ---------------------------------------------------------------------------
# SSVM subgradients (decoded labeling frozen).

def ssvm_unary_subgradient(gt, xbar1, label_count):
    """One-hot(gt) minus one-hot(decoded) per valid pixel, as a volume."""
    labels, mask = target_labels(gt, label_count)
    g = np.zeros(xbar1.shape + (label_count,))
    rows, cols = np.nonzero(mask)
    g[rows, cols, labels[mask]] += 1.0
    g[rows, cols, xbar1[mask]] -= 1.0
    return g


def ssvm_pairwise_subgradient(gt_labels, xbar1, weights, penalty, valid=None):
    """Edge-weight and penalty-scalar subgradients; edges touching masked
    pixels are skipped. Returns ((grad_h, grad_v), grad_P1, grad_P2)."""
    if valid is None:
        valid = np.ones(gt_labels.shape, dtype=bool)
    grad_h = np.zeros(weights.shape)
    grad_v = np.zeros(weights.shape)
    gp1 = 0.0
    gp2 = 0.0
    for axis, grad_plane, plane in ((1, grad_h, weights.horizontal),
                                    (0, grad_v, weights.vertical)):
        if axis == 1:
            sl_a, sl_b = (slice(None), slice(None, -1)), (slice(None), slice(1, None))
        else:
            sl_a, sl_b = (slice(None, -1), slice(None)), (slice(1, None), slice(None))
        mask_e = valid[sl_a] & valid[sl_b]
        d_star = np.abs(gt_labels[sl_a] - gt_labels[sl_b])
        d_bar = np.abs(xbar1[sl_a] - xbar1[sl_b])
        grad_plane[sl_a] = np.where(
            mask_e, pairwise.rho(d_star, penalty) - pairwise.rho(d_bar, penalty), 0.0
        )
        w_e = plane[sl_a]
        gp1 += float((w_e * ((d_star == 1).astype(float) - (d_bar == 1)) * mask_e).sum())
        gp2 += float((w_e * ((d_star > 1).astype(float) - (d_bar > 1)) * mask_e).sum())
    return (grad_h, grad_v), gp1, gp2


def hinge_upper_bound(prob, gt, lam, gamma, tau):
    """Margin surrogate f(x*) - D(loss-augmented, lam); upper-bounds the
    scaled truncated loss of any energy minimizer. Masked pixels of x* are
    filled with the decoded labels so the energy is well defined."""
    L = prob.unary.shape[2]
    labels, mask = target_labels(gt, L)
    aug = loss_augment(prob, gt, gamma, tau)
    xbar1 = crf.decode(aug, lam)
    xstar = np.where(mask, labels, xbar1)
    return crf.energy(prob, xstar) - crf.dual_bound(aug, lam)


# ---------------------------------------------------------------------------
# SGD with momentum over the model parameter tree.

def _param_leaves(params, train_pairwise):
    """Flat list of the trainable arrays, matching ModelGrads.leaves order."""
    leaves = []
    for layer in params.unary_layers:
        leaves.append(layer.kernel)
        leaves.append(layer.bias)
    if train_pairwise and params.pairwise_layers:
        for layer in params.pairwise_layers:
            leaves.append(layer.kernel)
            leaves.append(layer.bias)
    return leaves


@dataclass
class ModelGrads:
    unary: list                  # [(grad_kernel, grad_bias), ...]
    pairwise: list | None = None
    P1: float = 0.0
    P2: float = 0.0

    def leaves(self):
        out = []
        for gk, gb in self.unary:
            out.append(gk)
            out.append(gb)
        if self.pairwise is not None:
            for gk, gb in self.pairwise:
                out.append(gk)
                out.append(gb)
        return out


def zero_grads_like(params, with_pairwise=False):
    unary = [(np.zeros_like(l.kernel), np.zeros_like(l.bias)) for l in params.unary_layers]
    pw = None
    if with_pairwise and params.pairwise_layers:
        pw = [(np.zeros_like(l.kernel), np.zeros_like(l.bias)) for l in params.pairwise_layers]
    return ModelGrads(unary, pw)


def sgd_momentum(params, grads, lr, momentum, state=None):
    """v <- momentum*v - lr*g; p <- p + v; penalties projected to
    0 <= P1 <= P2 afterwards. Raises TrainingError on non-finite input."""
    leaves = grads.leaves()
    scalars = [grads.P1, grads.P2]
    if any(not np.all(np.isfinite(g)) for g in leaves) or not np.all(np.isfinite(scalars)):
        raise TrainingError("non-finite gradient")
    new = params.copy()
    train_pw = grads.pairwise is not None
    targets = _param_leaves(new, train_pw)
    if len(targets) != len(leaves):
        raise TrainingError("gradient structure does not match the parameters")
    if state is None:
        state = [np.zeros_like(t) for t in targets] + [0.0, 0.0]
    vel = [momentum * v - lr * g for v, g in zip(state[:-2], leaves)]
    for t, v in zip(targets, vel):
        t += v
    v1 = momentum * state[-2] - lr * grads.P1
    v2 = momentum * state[-1] - lr * grads.P2
    p1 = max(new.penalty.P1 + v1, 0.0)
    p2 = max(new.penalty.P2 + v2, p1)
    new.penalty = pairwise.PenaltyParams(p1, p2)
    return new, vel + [v1, v2]


# ---------------------------------------------------------------------------
# Training loops.

def _siamese_forward(sample, params):
    left_p = model.prepare_image(sample.left, params)
    right_p = model.prepare_image(sample.right, params)
    phi0, cache0 = cnn.network_forward(left_p, params.unary_layers)
    phi1, cache1 = cnn.network_forward(right_p, params.unary_layers)
    p = correlation.correlate(phi0, phi1, sample.label_count, params.sign)
    return left_p, (phi0, cache0), (phi1, cache1), p


def _unary_grads_from_prob_grad(params, fwd, grad_p):
    _, (phi0, cache0), (phi1, cache1), p = fwd
    g0, g1 = correlation.correlate_backward(phi0, phi1, p, grad_p, params.sign)
    grads0, _ = cnn.network_backward(params.unary_layers, cache0, g0)
    grads1, _ = cnn.network_backward(params.unary_layers, cache1, g1)
    return [(a[0] + b[0], a[1] + b[1]) for a, b in zip(grads0, grads1)]


def train_unary(dataset, config, params, on_epoch=None):
    """Cross-entropy training of the matching network (interactions off).

    on_epoch(epoch, params), when given, runs after every epoch (checkpoint
    cadence). Returns (trained params, per-epoch mean loss history)."""
    rng = np.random.default_rng(config.seed)
    state = None
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        losses = []
        for idx in order:
            sample = dataset[idx]
            fwd = _siamese_forward(sample, params)
            ce = cross_entropy(fwd[3], sample.gt)
            losses.append(ce.loss)
            unary_grads = _unary_grads_from_prob_grad(params, fwd, ce.grad_p)
            params, state = sgd_momentum(
                params, ModelGrads(unary_grads), config.lr_unary,
                config.momentum, state,
            )
        history.append(float(np.mean(losses)))
        logger.info("train_unary epoch %d: mean cross-entropy %.6f", epoch, history[-1])
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params, history


def grid_search_contrast(dataset, params, alphas, betas, iterations=5, threshold=1.0):
    """Pick (alpha, beta) minimizing mean badx of CRF inference on a
    validation set; the candidate grids are caller-supplied."""
    from . import evaluate

    best = (None, np.inf)
    for alpha in alphas:
        for beta in betas:
            candidate = params.copy()
            candidate.pairwise_mode = "contrast"
            candidate.alpha = float(alpha)
            candidate.beta = float(beta)
            scores = []
            for sample in dataset:
                disparity, _ = model.infer_disparity(
                    sample.left, sample.right, candidate, sample.label_count,
                    iterations=iterations, mode="contrast",
                )
                scores.append(evaluate.badx(disparity, sample.gt, threshold))
            mean = float(np.mean(scores))
            if mean < best[1]:
                best = ((float(alpha), float(beta)), mean)
    return best


@dataclass
class JointStepLog:
    sample_id: int
    hinge_bound: float
    decoded_loss: float
    disagreement: float  # fraction of pixels where row/col decodes differ
    P1: float
    P2: float


def joint_step_csv(rows):
    lines = ["sample_id,hinge_bound,decoded_loss,disagreement,P1,P2"]
    for r in rows:
        lines.append(
            f"{r.sample_id},{r.hinge_bound!r},{r.decoded_loss!r},"
            f"{r.disagreement!r},{r.P1!r},{r.P2!r}"
        )
    return "\n".join(lines) + "\n"


def joint_sample_step(sample, params, config):
    """One SSVM step on one sample: loss-augmented inference, frozen-decode
    subgradients through correlation, feature network and edge weights."""
    train_pairwise = params.pairwise_mode == "learned"
    left_p = model.prepare_image(sample.left, params)
    right_p = model.prepare_image(sample.right, params)
    phi0, cache0 = cnn.network_forward(left_p, params.unary_layers)
    phi1, cache1 = cnn.network_forward(right_p, params.unary_layers)
    p = correlation.correlate(phi0, phi1, sample.label_count, params.sign)

    pw_cache = None
    if train_pairwise:
        weights, pw_cache = pairwise.pairwise_cnn_forward(
            left_p, params.pairwise_layers, want_cache=True
        )
    else:
        weights = model.edge_weights(params, left_p)
    prob = crf.CrfProblem(correlation.unary_costs(p), weights, params.penalty)

    aug = loss_augment(prob, sample.gt, config.gamma, config.tau)
    result = crf.run_inference(aug, config.crf_iterations)
    xbar1 = result.labeling
    xbar2 = crf.decode_column(aug, result.lam)

    labels, mask = target_labels(sample.gt, sample.label_count)
    g_unary = ssvm_unary_subgradient(sample.gt, xbar1, sample.label_count)
    # unary costs are -p at valid volume entries, constant elsewhere
    grad_p = np.where(p.valid, -g_unary, 0.0)
    fwd = (left_p, (phi0, cache0), (phi1, cache1), p)
    unary_grads = _unary_grads_from_prob_grad(params, fwd, grad_p)

    (gh, gv), gp1, gp2 = ssvm_pairwise_subgradient(
        labels, xbar1, weights, params.penalty, valid=mask
    )
    pw_grads = None
    if train_pairwise:
        pw_grads, _ = pairwise.pairwise_cnn_backward(
            params.pairwise_layers, pw_cache, (gh, gv)
        )
    grads = ModelGrads(unary_grads, pw_grads, gp1, gp2)

    hinge = crf.energy(prob, np.where(mask, labels, xbar1)) - result.bounds[-1]
    log = JointStepLog(
        sample_id=-1,
        hinge_bound=float(hinge),
        decoded_loss=truncated_loss(xbar1, sample.gt, config.tau, sample.label_count),
        disagreement=float((xbar1 != xbar2).mean()),
        P1=params.penalty.P1,
        P2=params.penalty.P2,
    )
    return grads, log


def train_joint(dataset, config, params, log_rows=None, on_epoch=None):
    """SSVM training of the joint model starting from pretrained parameters.

    With pairwise_mode "contrast" the feature network and P1, P2 are
    trained; with "learned" the weight network is trained as well. Aborts
    and returns the last finite parameters if a step diverges. on_epoch
    (epoch, params) runs after every epoch (checkpoint cadence)."""
    rng = np.random.default_rng(config.seed)
    state = None
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        for idx in order:
            sample = dataset[idx]
            grads, log = joint_sample_step(sample, params, config)
            log.sample_id = int(idx)
            if log_rows is not None:
                log_rows.append(log)
            if not np.isfinite(log.hinge_bound):
                logger.error("train_joint: divergent step on sample %d, aborting", idx)
                return params
            try:
                params, state = sgd_momentum(
                    params, grads, config.lr_joint, config.momentum, state
                )
            except TrainingError:
                logger.error("train_joint: non-finite gradients on sample %d, aborting", idx)
                return params
        if on_epoch is not None:
            on_epoch(epoch, params)
    return params


def validation_score(dataset, params, iterations=5, threshold=1.0, mode=None):
    """Mean badx of full inference over a validation set; used to keep the
    best checkpoint across epochs."""
    from . import evaluate

    scores = []
    for sample in dataset:
        disparity, _ = model.infer_disparity(
            sample.left, sample.right, params, sample.label_count,
            iterations=iterations, mode=mode,
        )
        scores.append(evaluate.badx(disparity, sample.gt, threshold))
    return float(np.mean(scores))
