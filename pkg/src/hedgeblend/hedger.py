"""Recurrent hedging network trained end-to-end through the P&L rollout.

Architecture: two stacked LSTM layers (32 hidden units each) and an affine
scalar head emitting an unconstrained hedge ratio. At each step the network
sees (log moneyness, time to expiry, instantaneous vol, previous hedge) and
carries hidden state across the path. Training minimises the entropic risk
of terminal P&L, transaction costs included, by reverse-mode differentiation
through the whole rollout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import rng
from .accounting import CostSpec, HedgeSchedule
from .autodiff import Tensor
from .errors import NumericalDivergenceError, ParameterError
from .market import MarketPaths, PathGrid, simulate
from .objectives import entropic_objective, entropic_weights, pnl_on_tape
from .risk import entropic_risk

INPUT_DIM = 4  # log_moneyness, tau, inst_vol, prev_delta
HIDDEN = 32
N_LAYERS = 2

# Largest per-epoch batch taped in one pass; bigger batches use the exact
# two-pass chunked gradient (see train_hedger).
TAPE_BATCH_LIMIT = 6144

PARAM_NAMES = ("w_ih_0", "w_hh_0", "b_0", "w_ih_1", "w_hh_1", "b_1", "w_out", "b_out")


@dataclass
class TrainConfig:
    """Training schedule: one Adam update per epoch on a fresh path batch."""

    epochs: int = 100
    paths_per_epoch: int = 5000
    step_size: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    risk_aversion: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.paths_per_epoch < 1:
            raise ParameterError("epochs and paths_per_epoch must be >= 1")
        if self.step_size <= 0:
            raise ParameterError("step_size must be positive")
        if self.risk_aversion <= 0:
            raise ParameterError("risk_aversion must be positive")


@dataclass
class HedgerModel:
    """Trained (or freshly initialised) hedging network."""

    params: dict[str, np.ndarray]
    hidden: int = HIDDEN
    n_layers: int = N_LAYERS
    seed: int = 0
    loss_history: list[float] = field(default_factory=list)

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "HedgerModel":
        return HedgerModel(
            params={k: v.copy() for k, v in self.params.items()},
            hidden=self.hidden,
            n_layers=self.n_layers,
            seed=self.seed,
            loss_history=list(self.loss_history),
        )


def init_model(seed: int, hidden: int = HIDDEN) -> HedgerModel:
    """Uniform(-k, k) blocks with k = 1/sqrt(fan_in); forget-gate bias 1."""
    gen = rng.generator(rng.derive_seed(seed, rng.TAG_INIT))

    def block(fan_in: int, shape) -> np.ndarray:
        k = 1.0 / np.sqrt(fan_in)
        return gen.uniform(-k, k, size=shape)

    params: dict[str, np.ndarray] = {}
    in_dim = INPUT_DIM
    for layer in range(N_LAYERS):
        params[f"w_ih_{layer}"] = block(in_dim, (in_dim, 4 * hidden))
        params[f"w_hh_{layer}"] = block(hidden, (hidden, 4 * hidden))
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0
        params[f"b_{layer}"] = bias
        in_dim = hidden
    params["w_out"] = block(hidden, (hidden, 1))
    params["b_out"] = np.zeros(1)
    return HedgerModel(params=params, hidden=hidden, seed=seed)


def _param_tensors(model: HedgerModel, requires_grad: bool) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=requires_grad) for k, v in model.params.items()}


def _rollout(
    params: dict[str, Tensor],
    paths: MarketPaths,
    strike: float,
    hidden: int,
    check_finite: bool = False,
) -> Tensor:
    """Hedge ratios (B, n_steps) as a tape tensor; state never crosses paths."""
    n_paths, n = paths.n_paths, paths.n_steps
    dtype = params["w_out"].data.dtype
    consts = np.empty((n, n_paths, 3), dtype=dtype)
    consts[:, :, 0] = np.log(paths.spot[:, :n] / strike).T
    consts[:, :, 1] = paths.grid.taus()[:, None]
    consts[:, :, 2] = np.sqrt(paths.variance[:, :n]).T

    # One stacked weight per layer: [input rows; recurrent rows].
    stacked = [
        ad.concat([params[f"w_ih_{layer}"], params[f"w_hh_{layer}"]], axis=0)
        for layer in range(N_LAYERS)
    ]
    h = [Tensor(np.zeros((n_paths, hidden), dtype=dtype)) for _ in range(N_LAYERS)]
    c = [Tensor(np.zeros((n_paths, hidden), dtype=dtype)) for _ in range(N_LAYERS)]
    delta_prev = Tensor(np.zeros((n_paths, 1), dtype=dtype))
    columns = []
    for t in range(n):
        x = Tensor(consts[t])
        for layer in range(N_LAYERS):
            pieces = [x, delta_prev] if layer == 0 else [x]
            xh = ad.concat(pieces + [h[layer]], axis=1)
            h[layer], c[layer] = ad.lstm_cell(xh, c[layer], stacked[layer], params[f"b_{layer}"])
            x = h[layer]
        delta_prev = x @ params["w_out"] + params["b_out"]
        if check_finite and not np.isfinite(delta_prev.data).all():
            raise NumericalDivergenceError(f"non-finite hedge ratio at step {t}")
        columns.append(delta_prev)
    return ad.concat(columns, axis=1)


def forward_rollout(model: HedgerModel, paths: MarketPaths, strike: float) -> HedgeSchedule:
    """Inference-only rollout (no gradients taped)."""
    delta = _rollout(_param_tensors(model, False), paths, strike, model.hidden, check_finite=True)
    return HedgeSchedule(delta.data, f"hedger_{model.seed}")


def train_hedger(
    config: TrainConfig,
    market,
    grid: PathGrid,
    cost: CostSpec,
    strike: float,
    label: str = "",
    dtype=np.float32,
    callback=None,
) -> HedgerModel:
    """Train one hedger; deterministic for a fixed config.

    Each epoch simulates a fresh batch (seed mixed from config.seed and the
    epoch index), rolls the network through it, and applies one Adam update
    of the entropic risk of terminal P&L. ``market`` is a HestonParams or
    GBMSpec. Raises NumericalDivergenceError naming the epoch if the loss
    leaves the reals.

    Training runs in float32 by default (the rollout is the hot loop; the
    objective tolerances sit far above single precision); pass
    ``dtype=np.float64`` for double-precision training. Gradient checks are
    always performed in float64 regardless.

    ``callback(epoch, model)``, when given, fires after each update; useful
    for periodic checkpoint evaluation.
    """
    model = init_model(config.seed)
    model.params = {k: v.astype(dtype) for k, v in model.params.items()}
    tensors = _param_tensors(model, requires_grad=True)
    model.params = {k: t.data for k, t in tensors.items()}
    order = [tensors[k] for k in PARAM_NAMES]
    adam = ad.Adam(order, lr=config.step_size, betas=config.adam_betas)

    a = config.risk_aversion
    for epoch in range(config.epochs):
        paths = simulate(
            market, grid, config.paths_per_epoch,
            seed=rng.derive_seed(config.seed, rng.TAG_EPOCH_PATHS, epoch),
        )
        if config.paths_per_epoch <= TAPE_BATCH_LIMIT:
            delta = _rollout(tensors, paths, strike, model.hidden)
            loss_t = entropic_objective(
                pnl_on_tape(delta, paths.spot, cost.cost_rate, strike), a
            )
            loss = float(loss_t.data)
            if not np.isfinite(loss):
                raise NumericalDivergenceError(
                    f"{label or 'hedger'}: training loss diverged at epoch {epoch}"
                )
            ad.backward(loss_t)
        else:
            loss = _chunked_backward(tensors, paths, cost, strike, a, model.hidden)
            if not np.isfinite(loss):
                raise NumericalDivergenceError(
                    f"{label or 'hedger'}: training loss diverged at epoch {epoch}"
                )
        adam.step()
        adam.zero_grad()
        model.loss_history.append(loss)
        if callback is not None:
            callback(epoch, model)
    return model


def _chunked_backward(
    tensors: dict[str, Tensor],
    paths: MarketPaths,
    cost: CostSpec,
    strike: float,
    a: float,
    hidden: int,
) -> float:
    """Exact full-batch entropic gradient in bounded memory.

    Pass one (no tape) computes every path's P&L, giving the loss and the
    softmax weights w with d loss/d pnl_i = -w_i; pass two re-rolls each chunk
    on the tape and backpropagates sum(-w_i * pnl_i), accumulating into the
    parameter grads. The result is identical to one full-batch backward.
    """
    frozen = {k: Tensor(t.data) for k, t in tensors.items()}
    pnl_chunks = []
    bounds = list(range(0, paths.n_paths, TAPE_BATCH_LIMIT)) + [paths.n_paths]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        sub = paths.take(np.arange(lo, hi))
        delta = _rollout(frozen, sub, strike, hidden)
        pnl_chunks.append(pnl_on_tape(delta, sub.spot, cost.cost_rate, strike).data)
    pnl = np.concatenate(pnl_chunks)
    loss = entropic_risk(pnl, a)
    if not np.isfinite(loss):
        return loss
    weights = entropic_weights(pnl, a)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        sub = paths.take(np.arange(lo, hi))
        delta = _rollout(tensors, sub, strike, hidden)
        pnl_t = pnl_on_tape(delta, sub.spot, cost.cost_rate, strike)
        ad.backward(ad.tsum(pnl_t * (-weights[lo:hi])))
    return loss


def training_loss(
    model: HedgerModel, paths: MarketPaths, cost: CostSpec, strike: float, a: float = 1.0
) -> float:
    """Entropic training objective of the model on a fixed batch (no gradients)."""
    delta = _rollout(_param_tensors(model, False), paths, strike, model.hidden)
    return entropic_risk(
        pnl_on_tape(delta, paths.spot, cost.cost_rate, strike).data, a
    )


def gradient_check(
    model: HedgerModel,
    paths: MarketPaths,
    cost: CostSpec,
    strike: float,
    n_params_sampled: int = 20,
    step: float = 1e-5,
    a: float = 1.0,
    seed: int = 0,
) -> float:
    """Max relative error of reverse-mode vs. central finite differences.

    Samples ``n_params_sampled`` coordinates of the flattened parameter
    vector and compares d(entropic loss)/d(theta).
    """
    model = HedgerModel(
        params={k: v.astype(np.float64) for k, v in model.params.items()},
        hidden=model.hidden,
        n_layers=model.n_layers,
        seed=model.seed,
    )
    tensors = _param_tensors(model, requires_grad=True)
    delta = _rollout(tensors, paths, strike, model.hidden)
    loss_t = entropic_objective(pnl_on_tape(delta, paths.spot, cost.cost_rate, strike), a)
    ad.backward(loss_t)

    sizes = [model.params[k].size for k in PARAM_NAMES]
    total = sum(sizes)
    gen = rng.generator(rng.derive_seed(seed, rng.TAG_SAMPLE))
    coords = gen.choice(total, size=min(n_params_sampled, total), replace=False)

    probe = model.copy()
    worst = 0.0
    for flat_index in np.sort(coords):
        idx = int(flat_index)
        for name, size in zip(PARAM_NAMES, sizes):
            if idx < size:
                break
            idx -= size
        grad_ad = tensors[name].grad.reshape(-1)[idx]
        theta = probe.params[name].reshape(-1)
        original = theta[idx]
        theta[idx] = original + step
        up = training_loss(probe, paths, cost, strike, a)
        theta[idx] = original - step
        down = training_loss(probe, paths, cost, strike, a)
        theta[idx] = original
        grad_fd = (up - down) / (2.0 * step)
        rel = abs(grad_ad - grad_fd) / max(abs(grad_ad), abs(grad_fd), 1e-8)
        worst = max(worst, rel)
    return worst


def network_price(
    model: HedgerModel, paths: MarketPaths, cost: CostSpec, strike: float, a: float = 1.0
) -> float:
    """Entropic indifference price of the hedged short call.

    The cash that zeroes the entropic risk of (price + P&L); by translation
    this is exactly the entropic risk of the hedged P&L itself.
    """
    from .accounting import compute_pnl  # local to avoid cycle at import time

    schedule = forward_rollout(model, paths, strike)
    report = compute_pnl(paths, schedule, cost, strike)
    return entropic_risk(report.pnl, a)


def save_model(model: HedgerModel, filename: str) -> None:
    """Checkpoint: flat parameter arrays plus a JSON metadata record."""
    meta = {
        "format": "hedgeblend-checkpoint-v1",
        "input_dim": INPUT_DIM,
        "hidden": model.hidden,
        "n_layers": model.n_layers,
        "seed": model.seed,
        "loss_history": model.loss_history,
    }
    np.savez(filename, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **model.params)


def load_model(filename: str) -> HedgerModel:
    data = np.load(filename)
    meta = json.loads(bytes(data["meta"]).decode())
    if meta.get("format") != "hedgeblend-checkpoint-v1":
        raise ParameterError(f"{filename} is not a hedger checkpoint")
    params = {name: data[name].copy() for name in PARAM_NAMES}
    return HedgerModel(
        params=params,
        hidden=int(meta["hidden"]),
        n_layers=int(meta["n_layers"]),
        seed=int(meta["seed"]),
        loss_history=[float(x) for x in meta["loss_history"]],
    )
