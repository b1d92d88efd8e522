"""Log-space circuit evaluation: forward, max-semiring, and reverse-mode.

Evaluation is a single bottom-up pass, linear in the number of edges.
Evidence is a mask array over variables: 0/1 observe a value, -1 marginalizes
the variable. Masks may be batched (B, c); parameters may be shared (P,) or
per-example (B, P), matching the gating network's per-input parameterization.
"""

from __future__ import annotations

import numpy as np

from .circuit import BERN, IND, MARG, PROD, SUM, Circuit, CircuitError

NEG_INF = -np.inf


class InvalidParamsError(CircuitError):
    pass


def validate_params(circuit: Circuit, params: np.ndarray, tol: float = 1e-9) -> None:
    """Check the parameter-vector invariants of a built circuit.

    Sum blocks must be locally normalized (log-sum-exp 0 within ``tol``) and
    every leaf probability must lie strictly inside (0, 1).
    """
    params = np.asarray(params, dtype=float)
    if params.shape[-1] != circuit.num_params:
        raise InvalidParamsError(
            f"expected {circuit.num_params} parameters, got {params.shape[-1]}")
    if not np.all(np.isfinite(params)):
        raise InvalidParamsError("non-finite parameter")
    layout = circuit.layout
    if layout is None:
        return
    for off, fan in layout.sum_blocks:
        block = params[..., off:off + fan]
        lse = _logsumexp(block, axis=-1)
        if np.any(np.abs(lse) > tol):
            raise InvalidParamsError(
                f"sum block at offset {off} not normalized (log-sum-exp {lse!r})")
    if layout.leaf_slots:
        leaves = params[..., list(layout.leaf_slots)]
        if np.any(leaves <= 0.0) or np.any(leaves >= 1.0):
            raise InvalidParamsError("leaf parameter outside (0, 1)")


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


def _leaf_tables(circuit: Circuit, params: np.ndarray):
    """Per-Bernoulli-leaf log-values at 0 and 1, shape broadcastable to batch.

    Returns dict unit id -> (lv0, lv1); entries are scalars or (B,) arrays.
    """
    with np.errstate(divide="ignore"):
        logp = np.log(params)
        log1p_ = np.log1p(-params)
    tables = {}
    for u in circuit.units:
        if u.kind != BERN:
            continue
        if len(u.slots) == 1:
            lv1 = logp[..., u.slots[0]]
            lv0 = log1p_[..., u.slots[0]]
        else:
            lv1 = sum(logp[..., s] for s in u.slots)
            lv0 = sum(log1p_[..., s] for s in u.slots)
        if u.pin == 1:
            lv0 = np.full_like(np.asarray(lv0, dtype=float), NEG_INF)
        elif u.pin == 0:
            lv1 = np.full_like(np.asarray(lv1, dtype=float), NEG_INF)
        tables[u.id] = (np.asarray(lv0, dtype=float), np.asarray(lv1, dtype=float))
    return tables


def _sum_weights(unit, params: np.ndarray) -> list[np.ndarray]:
    out = []
    for const, slots in unit.weights:
        w = np.asarray(const, dtype=float)
        for s in slots:
            w = w + params[..., s]
        out.append(w)
    return out


def _prepare(circuit: Circuit, params, masks):
    params = np.asarray(params, dtype=float)
    masks = np.asarray(masks, dtype=np.int8)
    squeeze = masks.ndim == 1
    if squeeze:
        masks = masks[None, :]
    if masks.shape[1] != circuit.num_vars:
        raise CircuitError(f"mask length {masks.shape[1]} != num_vars {circuit.num_vars}")
    if params.ndim == 2 and params.shape[0] != masks.shape[0]:
        raise CircuitError("batched parameters must match the mask batch")
    if params.shape[-1] != circuit.num_params:
        raise InvalidParamsError(
            f"expected {circuit.num_params} parameters, got {params.shape[-1]}")
    if not np.all(np.isfinite(params)):
        raise InvalidParamsError("non-finite parameter")
    return params, masks, squeeze


def log_forward(circuit: Circuit, params, masks, return_units: bool = False):
    """Log of the circuit polynomial under an evidence mask.

    Marginalized Bernoulli leaves sum both values, indicators integrate to 1,
    sums use log-sum-exp, products add. For a locally normalized circuit the
    all-marginalized value is 0 (= log 1).
    """
    params, masks, squeeze = _prepare(circuit, params, masks)
    B = masks.shape[0]
    leafs = _leaf_tables(circuit, params)
    values = np.empty((B, circuit.num_units), dtype=float)
    with np.errstate(invalid="ignore"):
        for u in circuit.units:
            if u.kind == BERN:
                lv0, lv1 = leafs[u.id]
                lv0 = np.broadcast_to(lv0, (B,))
                lv1 = np.broadcast_to(lv1, (B,))
                marg = np.logaddexp(lv0, lv1)
                col = masks[:, u.var]
                values[:, u.id] = np.where(col == MARG, marg,
                                           np.where(col == 1, lv1, lv0))
            elif u.kind == IND:
                col = masks[:, u.var]
                values[:, u.id] = np.where((col == MARG) | (col == u.value),
                                           0.0, NEG_INF)
            elif u.kind == PROD:
                acc = values[:, u.inputs[0]].copy()
                for i in u.inputs[1:]:
                    acc += values[:, i]
                values[:, u.id] = acc
            else:
                if not u.inputs:
                    values[:, u.id] = NEG_INF
                    continue
                ws = _sum_weights(u, params)
                acc = ws[0] + values[:, u.inputs[0]]
                for w, i in zip(ws[1:], u.inputs[1:]):
                    acc = np.logaddexp(acc, w + values[:, i])
                values[:, u.id] = acc
    values = np.nan_to_num(values, nan=NEG_INF, posinf=np.inf, neginf=NEG_INF)
    if return_units:
        return values[0] if squeeze else values
    out = values[:, circuit.root]
    return float(out[0]) if squeeze else out


def max_forward(circuit: Circuit, params, masks):
    """Max-semiring pass: maximum of the circuit polynomial over the
    marginalized variables. Exact for deterministic circuits."""
    params, masks, squeeze = _prepare(circuit, params, masks)
    B = masks.shape[0]
    leafs = _leaf_tables(circuit, params)
    values = np.empty((B, circuit.num_units), dtype=float)
    for u in circuit.units:
        if u.kind == BERN:
            lv0, lv1 = leafs[u.id]
            lv0 = np.broadcast_to(lv0, (B,))
            lv1 = np.broadcast_to(lv1, (B,))
            col = masks[:, u.var]
            values[:, u.id] = np.where(col == MARG, np.maximum(lv0, lv1),
                                       np.where(col == 1, lv1, lv0))
        elif u.kind == IND:
            col = masks[:, u.var]
            values[:, u.id] = np.where((col == MARG) | (col == u.value),
                                       0.0, NEG_INF)
        elif u.kind == PROD:
            acc = values[:, u.inputs[0]].copy()
            for i in u.inputs[1:]:
                acc += values[:, i]
            values[:, u.id] = acc
        else:
            if not u.inputs:
                values[:, u.id] = NEG_INF
                continue
            ws = _sum_weights(u, params)
            acc = ws[0] + values[:, u.inputs[0]]
            for w, i in zip(ws[1:], u.inputs[1:]):
                acc = np.maximum(acc, w + values[:, i])
            values[:, u.id] = acc
    values = np.nan_to_num(values, nan=NEG_INF, neginf=NEG_INF)
    out = values[:, circuit.root]
    return float(out[0]) if squeeze else out


def log_forward_grad(circuit: Circuit, params, masks):
    """Forward values plus gradients of the root log-value w.r.t. parameters.

    Reverse accumulation: sum units propagate posterior-weighted adjoints to
    their inputs and weight slots; Bernoulli leaves turn adjoints into
    residuals on their probability parameters. Returns ``(values, grads)``
    with grads of shape (B, P). Rows whose root value is -inf get zero
    gradient.
    """
    params, masks, squeeze = _prepare(circuit, params, masks)
    B = masks.shape[0]
    P = circuit.num_params
    leafs = _leaf_tables(circuit, params)
    values = log_forward(circuit, params, masks, return_units=True)
    if squeeze:
        values = values[None, :]
    adj = np.zeros((B, circuit.num_units), dtype=float)
    adj[:, circuit.root] = np.where(values[:, circuit.root] > NEG_INF, 1.0, 0.0)
    grads = np.zeros((B, P), dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        for u in reversed(circuit.units):
            a = adj[:, u.id]
            if not np.any(a):
                continue
            if u.kind == PROD:
                for i in u.inputs:
                    adj[:, i] += a
            elif u.kind == SUM:
                vu = values[:, u.id]
                ws = _sum_weights(u, params)
                for (const, slots), w, i in zip(u.weights, ws, u.inputs):
                    post = np.exp(w + values[:, i] - vu)
                    post = np.where(vu > NEG_INF, post, 0.0)
                    post = np.nan_to_num(post, nan=0.0)
                    contrib = a * post
                    adj[:, i] += contrib
                    for s in slots:
                        grads[:, s] += contrib
            elif u.kind == BERN:
                lv0, lv1 = leafs[u.id]
                lv0 = np.broadcast_to(lv0, (B,))
                lv1 = np.broadcast_to(lv1, (B,))
                vu = values[:, u.id]
                col = masks[:, u.var]
                # posterior over the leaf value given the mask
                w1 = np.where(col == 1, 1.0,
                              np.where(col == 0, 0.0,
                                       np.exp(np.clip(lv1 - vu, None, 0.0))))
                w1 = np.where(vu > NEG_INF, w1, 0.0)
                w0 = np.where(col == 0, 1.0,
                              np.where(col == 1, 0.0,
                                       np.exp(np.clip(lv0 - vu, None, 0.0))))
                w0 = np.where(vu > NEG_INF, w0, 0.0)
                w1 = np.where(np.isfinite(lv1), w1, 0.0)
                w0 = np.where(np.isfinite(lv0), w0, 0.0)
                for s in u.slots:
                    p = params[..., s]
                    grads[:, s] += a * (w1 / p - w0 / (1.0 - p))
    out_vals = values[:, circuit.root]
    if squeeze:
        return float(out_vals[0]), grads[0]
    return out_vals, grads
