"""Recurrent schedule-sequence cost model with attention pooling.

The estimator consumes StepSequence values: a stack of bidirectional LSTM
layers encodes the schedule steps, an iterative multi-head attention block
pools the step encodings (each pass re-attends with the previous pooled
state as query), and a small dense head maps the pooled state concatenated
with the static kernel+hardware context to a score in (0, 1).

Everything is plain numpy with hand-written backpropagation; gradients for
every parameter group are validated against central finite differences in
the test suite.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import DataValidationError, NumericFailure
from ..features import CONTEXT_LENGTH, STEP_WIDTH, StepSequence
from .mlp import _glorot, ranking_grad
from .optim import Adam

HEAD_HIDDEN = 64


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _pack(
    sequences: list[StepSequence],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Pad a list of sequences into (steps, mask, contexts) batch arrays."""
    if not sequences:
        raise DataValidationError("empty sequence batch")
    max_t = max(s.steps.shape[0] for s in sequences)
    batch = len(sequences)
    X = np.zeros((batch, max_t, STEP_WIDTH))
    mask = np.zeros((batch, max_t))
    ctx = np.zeros((batch, CONTEXT_LENGTH))
    for i, seq in enumerate(sequences):
        t = seq.steps.shape[0]
        X[i, :t] = seq.steps
        mask[i, :t] = 1.0
        ctx[i] = seq.context
    return X, mask, ctx


class _LstmDirection:
    """Single-direction LSTM pass with cached activations for backprop."""

    def __init__(self, Wx: np.ndarray, Wh: np.ndarray, b: np.ndarray):
        self.Wx, self.Wh, self.b = Wx, Wh, b

    def forward(self, X: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, dict]:
        B, T, _ = X.shape
        H = self.Wh.shape[0]
        xz = X.reshape(B * T, -1) @ self.Wx
        xz = xz.reshape(B, T, 4 * H)
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        outs = np.empty((B, T, H))
        cache = {
            "X": X,
            "mask": mask,
            "i": np.empty((B, T, H)),
            "f": np.empty((B, T, H)),
            "g": np.empty((B, T, H)),
            "o": np.empty((B, T, H)),
            "tanh_c": np.empty((B, T, H)),
            "h_prev": np.empty((B, T, H)),
            "c_prev": np.empty((B, T, H)),
        }
        for t in range(T):
            z = xz[:, t] + h @ self.Wh + self.b
            i = _sigmoid(z[:, :H])
            f = _sigmoid(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = _sigmoid(z[:, 3 * H :])
            c_raw = f * c + i * g
            tanh_c = np.tanh(c_raw)
            h_raw = o * tanh_c
            m = mask[:, t][:, None]
            cache["i"][:, t] = i
            cache["f"][:, t] = f
            cache["g"][:, t] = g
            cache["o"][:, t] = o
            cache["tanh_c"][:, t] = tanh_c
            cache["h_prev"][:, t] = h
            cache["c_prev"][:, t] = c
            c = m * c_raw + (1.0 - m) * c
            h = m * h_raw + (1.0 - m) * h
            outs[:, t] = h
        return outs, cache

    def backward(
        self, cache: dict, d_outs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        X, mask = cache["X"], cache["mask"]
        B, T, _ = X.shape
        H = self.Wh.shape[0]
        d_xz = np.zeros((B, T, 4 * H))
        dWh = np.zeros_like(self.Wh)
        db = np.zeros_like(self.b)
        dh = np.zeros((B, H))
        dc = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            m = mask[:, t][:, None]
            i = cache["i"][:, t]
            f = cache["f"][:, t]
            g = cache["g"][:, t]
            o = cache["o"][:, t]
            tanh_c = cache["tanh_c"][:, t]
            h_prev = cache["h_prev"][:, t]
            c_prev = cache["c_prev"][:, t]

            dh_total = d_outs[:, t] + dh
            dh_raw = dh_total * m
            dh_skip = dh_total * (1.0 - m)
            dc_raw = dc * m
            dc_skip = dc * (1.0 - m)

            do = dh_raw * tanh_c
            dc_raw = dc_raw + dh_raw * o * (1.0 - tanh_c**2)
            df = dc_raw * c_prev
            di = dc_raw * g
            dg = dc_raw * i
            dc = dc_raw * f + dc_skip

            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g**2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            d_xz[:, t] = dz
            dWh += h_prev.T @ dz
            db += dz.sum(axis=0)
            dh = dz @ self.Wh.T + dh_skip
        dWx = X.reshape(B * T, -1).T @ d_xz.reshape(B * T, -1)
        dX = (d_xz.reshape(B * T, -1) @ self.Wx.T).reshape(X.shape)
        return dX, dWx, dWh, db


class RecurrentAttentionTuner(BaseEstimator, RegressorMixin):
    """Sequence cost model: biLSTM stack, iterative attention, dense head."""

    def __init__(
        self,
        batch_size: int = 16,
        epochs: int = 200,
        learning_rate: float = 1e-3,
        recurrent_layers: int = 3,
        hidden_size: int = 32,
        attention_heads: int = 2,
        attention_unroll_steps: int = 2,
        loss: str = "rmse",
        seed: int = 0,
    ) -> None:
        self.batch_size = batch_size
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.recurrent_layers = recurrent_layers
        self.hidden_size = hidden_size
        self.attention_heads = attention_heads
        self.attention_unroll_steps = attention_unroll_steps
        self.loss = loss
        self.seed = seed

    # -- parameters -------------------------------------------------------

    def _init_params(self) -> None:
        if self.recurrent_layers < 1 or self.hidden_size < 1:
            raise DataValidationError("network size parameters must be positive")
        if self.attention_heads < 1 or self.attention_unroll_steps < 1:
            raise DataValidationError("attention parameters must be positive")
        if (2 * self.hidden_size) % self.attention_heads != 0:
            raise DataValidationError(
                "attention_heads must divide twice the hidden size"
            )
        rng = np.random.default_rng(self.seed)
        H = self.hidden_size
        D = 2 * H
        params: dict[str, np.ndarray] = {}
        for layer in range(self.recurrent_layers):
            d_in = STEP_WIDTH if layer == 0 else D
            for direction in ("fw", "bw"):
                prefix = f"lstm{layer}_{direction}"
                params[f"{prefix}_Wx"] = _glorot(rng, d_in, 4 * H)
                params[f"{prefix}_Wh"] = _glorot(rng, H, 4 * H)
                bias = np.zeros(4 * H)
                bias[H : 2 * H] = 1.0  # open forget gates at init
                params[f"{prefix}_b"] = bias
        for name in ("Wq", "Wk", "Wv", "Wo"):
            params[f"attn_{name}"] = _glorot(rng, D, D)
        params["attn_bq"] = np.zeros(D)
        params["attn_bo"] = np.zeros(D)
        params["head_W1"] = _glorot(rng, D + CONTEXT_LENGTH, HEAD_HIDDEN)
        params["head_b1"] = np.zeros(HEAD_HIDDEN)
        params["head_W2"] = _glorot(rng, HEAD_HIDDEN, 1)
        params["head_b2"] = np.zeros(1)
        self.params_ = params

    def param_groups(self) -> dict[str, list[str]]:
        """Parameter names by functional group (used for partial freezing)."""
        groups: dict[str, list[str]] = {"recurrent": [], "attention": [], "head": []}
        for name in self.params_:
            if name.startswith("lstm"):
                groups["recurrent"].append(name)
            elif name.startswith("attn"):
                groups["attention"].append(name)
            else:
                groups["head"].append(name)
        return groups

    # -- forward / backward ----------------------------------------------

    def _forward(
        self, X: np.ndarray, mask: np.ndarray, ctx: np.ndarray
    ) -> tuple[np.ndarray, dict]:
        p = self.params_
        H = self.hidden_size
        cache: dict = {"mask": mask, "ctx": ctx, "layers": []}
        current = X
        for layer in range(self.recurrent_layers):
            fw = _LstmDirection(
                p[f"lstm{layer}_fw_Wx"], p[f"lstm{layer}_fw_Wh"], p[f"lstm{layer}_fw_b"]
            )
            bw = _LstmDirection(
                p[f"lstm{layer}_bw_Wx"], p[f"lstm{layer}_bw_Wh"], p[f"lstm{layer}_bw_b"]
            )
            out_fw, cache_fw = fw.forward(current, mask)
            out_bw_rev, cache_bw = bw.forward(current[:, ::-1], mask[:, ::-1])
            out = np.concatenate([out_fw, out_bw_rev[:, ::-1]], axis=2)
            cache["layers"].append((cache_fw, cache_bw))
            current = out
        S = current  # (B, T, 2H)

        nh = self.attention_heads
        D = 2 * H
        dh = D // nh
        B, T, _ = S.shape
        denom = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
        p0 = (S * mask[:, :, None]).sum(axis=1) / denom

        K = (S.reshape(B * T, D) @ p["attn_Wk"]).reshape(B, T, nh, dh).transpose(0, 2, 1, 3)
        V = (S.reshape(B * T, D) @ p["attn_Wv"]).reshape(B, T, nh, dh).transpose(0, 2, 1, 3)

        passes = []
        pooled = p0
        neg = np.where(mask[:, None, :] > 0, 0.0, -1e30)
        for _ in range(self.attention_unroll_steps):
            q = pooled @ p["attn_Wq"] + p["attn_bq"]
            qh = q.reshape(B, nh, dh)
            logits = np.einsum("bnd,bntd->bnt", qh, K) / np.sqrt(dh) + neg
            logits -= logits.max(axis=2, keepdims=True)
            expl = np.exp(logits)
            alpha = expl / expl.sum(axis=2, keepdims=True)
            ctx_h = np.einsum("bnt,bntd->bnd", alpha, V)
            ctx_flat = ctx_h.reshape(B, D)
            new_pooled = ctx_flat @ p["attn_Wo"] + p["attn_bo"]
            passes.append(
                {"p_in": pooled, "qh": qh, "alpha": alpha, "ctx_flat": ctx_flat}
            )
            pooled = new_pooled

        z = np.concatenate([pooled, ctx], axis=1)
        a1 = np.tanh(z @ p["head_W1"] + p["head_b1"])
        logit = (a1 @ p["head_W2"] + p["head_b2"]).ravel()
        y_hat = _sigmoid(logit)

        cache.update(
            {"S": S, "K": K, "V": V, "p0": p0, "denom": denom, "passes": passes,
             "z": z, "a1": a1, "y_hat": y_hat}
        )
        return y_hat, cache

    def _backward(self, cache: dict, d_y: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params_
        H = self.hidden_size
        D = 2 * H
        nh = self.attention_heads
        dh = D // nh
        S, K, V = cache["S"], cache["K"], cache["V"]
        mask = cache["mask"]
        B, T, _ = S.shape
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}

        y_hat = cache["y_hat"]
        d_logit = (d_y * y_hat * (1.0 - y_hat))[:, None]
        grads["head_W2"] = cache["a1"].T @ d_logit
        grads["head_b2"] = d_logit.sum(axis=0)
        d_a1 = (d_logit @ p["head_W2"].T) * (1.0 - cache["a1"] ** 2)
        grads["head_W1"] = cache["z"].T @ d_a1
        grads["head_b1"] = d_a1.sum(axis=0)
        d_z = d_a1 @ p["head_W1"].T
        d_pooled = d_z[:, :D]

        dK = np.zeros_like(K)
        dV = np.zeros_like(V)
        for rec in reversed(cache["passes"]):
            ctx_flat, alpha, qh, p_in = (
                rec["ctx_flat"],
                rec["alpha"],
                rec["qh"],
                rec["p_in"],
            )
            grads["attn_Wo"] += ctx_flat.T @ d_pooled
            grads["attn_bo"] += d_pooled.sum(axis=0)
            d_ctx = (d_pooled @ p["attn_Wo"].T).reshape(B, nh, dh)
            d_alpha = np.einsum("bnd,bntd->bnt", d_ctx, V)
            dV += np.einsum("bnt,bnd->bntd", alpha, d_ctx)
            d_logits = alpha * (d_alpha - (d_alpha * alpha).sum(axis=2, keepdims=True))
            d_qh = np.einsum("bnt,bntd->bnd", d_logits, K) / np.sqrt(dh)
            dK += np.einsum("bnt,bnd->bntd", d_logits, qh) / np.sqrt(dh)
            d_q = d_qh.reshape(B, D)
            grads["attn_Wq"] += p_in.T @ d_q
            grads["attn_bq"] += d_q.sum(axis=0)
            d_pooled = d_q @ p["attn_Wq"].T

        # d_pooled now sits on the masked mean p0.
        d_S = (d_pooled / cache["denom"])[:, None, :] * mask[:, :, None]
        dK_flat = dK.transpose(0, 2, 1, 3).reshape(B * T, D)
        dV_flat = dV.transpose(0, 2, 1, 3).reshape(B * T, D)
        S_flat = S.reshape(B * T, D)
        grads["attn_Wk"] += S_flat.T @ dK_flat
        grads["attn_Wv"] += S_flat.T @ dV_flat
        d_S += (dK_flat @ p["attn_Wk"].T).reshape(B, T, D)
        d_S += (dV_flat @ p["attn_Wv"].T).reshape(B, T, D)

        d_current = d_S
        for layer in range(self.recurrent_layers - 1, -1, -1):
            cache_fw, cache_bw = cache["layers"][layer]
            fw = _LstmDirection(
                p[f"lstm{layer}_fw_Wx"], p[f"lstm{layer}_fw_Wh"], p[f"lstm{layer}_fw_b"]
            )
            bw = _LstmDirection(
                p[f"lstm{layer}_bw_Wx"], p[f"lstm{layer}_bw_Wh"], p[f"lstm{layer}_bw_b"]
            )
            dX_fw, dWx_fw, dWh_fw, db_fw = fw.backward(cache_fw, d_current[:, :, :H])
            dX_bw, dWx_bw, dWh_bw, db_bw = bw.backward(
                cache_bw, d_current[:, ::-1, H:]
            )
            grads[f"lstm{layer}_fw_Wx"] = dWx_fw
            grads[f"lstm{layer}_fw_Wh"] = dWh_fw
            grads[f"lstm{layer}_fw_b"] = db_fw
            grads[f"lstm{layer}_bw_Wx"] = dWx_bw
            grads[f"lstm{layer}_bw_Wh"] = dWh_bw
            grads[f"lstm{layer}_bw_b"] = db_bw
            d_current = dX_fw + dX_bw[:, ::-1]
        return grads

    # -- public API --------------------------------------------------------

    def loss_and_gradients(
        self, sequences: list[StepSequence], y: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        X, mask, ctx = _pack(sequences)
        y = np.asarray(y, dtype=np.float64)
        y_hat, cache = self._forward(X, mask, ctx)
        if self.loss == "ranking":
            loss, d_y = ranking_grad(y, y_hat)
        else:
            diff = y_hat - y
            loss = float(np.mean(diff**2))
            d_y = 2.0 * diff / y.shape[0]
        return loss, self._backward(cache, d_y)

    def fit(self, sequences: list[StepSequence], y, eval_set=None, eval_groups=None):
        """Train on step sequences.

        eval_set is an optional (sequences, y) pair tracked per epoch;
        eval_groups (aligned with the eval sequences) additionally enables a
        per-epoch grouped pairwise-accuracy curve.
        """
        if self.loss not in ("rmse", "ranking"):
            raise DataValidationError(f"unknown loss {self.loss!r}")
        if self.batch_size < 1 or self.epochs < 0:
            raise DataValidationError("batch_size must be >= 1 and epochs >= 0")
        y = np.asarray(y, dtype=np.float64)
        if len(sequences) != y.shape[0] or not sequences:
            raise DataValidationError("sequences and y must align and be non-empty")
        self._init_params()
        return self._train(
            sequences, y, self.epochs, self.learning_rate, None, eval_set, eval_groups
        )

    def continue_fit(
        self,
        sequences: list[StepSequence],
        y,
        epochs: int,
        learning_rate: float,
        trainable: set[str] | None = None,
        eval_set=None,
        eval_groups=None,
        seed_offset: int = 9001,
    ):
        """Further training from the current weights (used for fine-tuning).

        trainable restricts updates to the named parameters; everything else
        stays frozen. Optimizer state starts fresh.
        """
        if not hasattr(self, "params_"):
            raise DataValidationError("continue_fit called before fit")
        y = np.asarray(y, dtype=np.float64)
        return self._train(
            sequences,
            y,
            epochs,
            learning_rate,
            trainable,
            eval_set,
            eval_groups,
            seed_offset=seed_offset,
        )

    def _train(
        self,
        sequences,
        y,
        epochs,
        learning_rate,
        trainable,
        eval_set,
        eval_groups,
        seed_offset: int = 1,
    ):
        optimizer = Adam(self.params_, learning_rate)
        rng = np.random.default_rng(self.seed + seed_offset)
        n = len(sequences)
        self.train_curve_: list[tuple[float, float | None, float | None]] = []
        for epoch in range(epochs):
            perm = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = perm[start : start + self.batch_size]
                loss, grads = self.loss_and_gradients(
                    [sequences[i] for i in batch], y[batch]
                )
                if not np.isfinite(loss):
                    raise NumericFailure(f"loss became non-finite at epoch {epoch}")
                if trainable is not None:
                    grads = {k: v for k, v in grads.items() if k in trainable}
                optimizer.step(grads)
            train_rmse = float(
                np.sqrt(np.mean((self.predict(sequences) - y) ** 2))
            )
            val_rmse = None
            val_pca = None
            if eval_set is not None:
                val_pred = self.predict(eval_set[0])
                val_y = np.asarray(eval_set[1], dtype=np.float64)
                val_rmse = float(np.sqrt(np.mean((val_pred - val_y) ** 2)))
                if eval_groups is not None:
                    val_pca = _grouped_pca(val_y, val_pred, eval_groups)
            self.train_curve_.append((train_rmse, val_rmse, val_pca))
        return self

    def predict(self, sequences: list[StepSequence], chunk: int = 256) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise DataValidationError("predict called before fit")
        outs = []
        for start in range(0, len(sequences), chunk):
            X, mask, ctx = _pack(sequences[start : start + chunk])
            y_hat, _ = self._forward(X, mask, ctx)
            outs.append(y_hat)
        return np.concatenate(outs) if outs else np.zeros(0)

    def get_weights(self) -> dict[str, np.ndarray]:
        return dict(self.params_)

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        self.params_ = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self.train_curve_ = []


def _grouped_pca(y: np.ndarray, y_hat: np.ndarray, groups) -> float | None:
    from ..metrics import pairwise_comparison_accuracy

    keys = {}
    for i, g in enumerate(groups):
        keys.setdefault(g, []).append(i)
    scores = []
    for idx in keys.values():
        if len(idx) >= 2:
            scores.append(pairwise_comparison_accuracy(y[idx], y_hat[idx]))
    return float(np.mean(scores)) if scores else None
