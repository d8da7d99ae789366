"""Executable numeric reference for the height-distillation forward pass.

Pure numpy, no autodiff: gradients are hand-derived and validated against
finite differences by the test suite. Feature maps are (locations, dim)
float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LAYERNORM_EPS = 1e-6
GROUPNORM_EPS = 1e-6
GROUPNORM_GROUPS = 4
DICE_EPS = 1.0
BCE_CLIP = 1e-7
SMOOTH_L1_BETA = 1.0
CLAMP_RANGE = 5.0


def _check_map(x, name="input") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be (locations, dim), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass
class Linear:
    w: np.ndarray  # (d_in, d_out)
    b: np.ndarray | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = x @ self.w
        if self.b is not None:
            out = out + self.b
        return out

    @classmethod
    def identity(cls, dim: int) -> "Linear":
        return cls(w=np.eye(dim))


@dataclass
class BlockParams:
    """One residual bottleneck block: x + gamma * f(groupnorm(x))."""

    down: Linear                 # dim -> dim // 4
    up: Linear                   # dim // 4 -> dim
    gamma: float = 0.0
    groups: int = GROUPNORM_GROUPS
    activation: str = "relu"     # "identity" lets tests stub f out


@dataclass
class AdapterParams:
    blocks: list[BlockParams] = field(default_factory=list)
    lam: float = 0.0             # fusion scalar balancing texture and geometry


@dataclass
class LossWeights:
    lambda_txt: float = 1.0
    lambda_mask: float = 1.0

    def __post_init__(self):
        if self.lambda_txt < 0 or self.lambda_mask < 0:
            raise ValueError("loss weights must be non-negative")


def layer_norm(x, eps: float = LAYERNORM_EPS) -> np.ndarray:
    x = _check_map(x)
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps)


def group_norm(x, groups: int = GROUPNORM_GROUPS, eps: float = GROUPNORM_EPS) -> np.ndarray:
    x = _check_map(x)
    n, d = x.shape
    if d % groups != 0:
        raise ValueError(f"dim {d} not divisible into {groups} groups")
    g = x.reshape(n, groups, d // groups)
    mean = g.mean(axis=2, keepdims=True)
    var = g.var(axis=2, keepdims=True)
    return ((g - mean) / np.sqrt(var + eps)).reshape(n, d)


def teacher_embed(geo, proj: Linear, clamp_range: float = CLAMP_RANGE,
                  eps: float = LAYERNORM_EPS) -> np.ndarray:
    """Project, layer-normalize per location, then clamp to [-c, c]."""
    geo = _check_map(geo, "geo")
    z = layer_norm(proj(geo), eps=eps)
    return np.clip(z, -clamp_range, clamp_range)


def _activate(u: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(u, 0.0)
    if kind == "identity":
        return u
    raise ValueError(f"unknown activation {kind!r}")


def bottleneck_branch(x, params: BlockParams) -> np.ndarray:
    """f(groupnorm(x)) with f = down-projection, nonlinearity, up-projection."""
    u = group_norm(x, groups=params.groups)
    return params.up(_activate(params.down(u), params.activation))


def bottleneck_block(x, params: BlockParams) -> np.ndarray:
    x = _check_map(x)
    return x + params.gamma * bottleneck_branch(x, params)


def adapter_forward(x, params: AdapterParams) -> np.ndarray:
    out = _check_map(x)
    for block in params.blocks:
        out = bottleneck_block(out, block)
    return out


def init_adapter(dim: int, n_blocks: int = 2, seed: int = 0) -> AdapterParams:
    """Fresh adapter: random bottleneck weights, every gamma at 0 so the
    whole stack is an exact identity."""
    if n_blocks < 1:
        raise ValueError("block count must be >= 1")
    if dim % 4 != 0:
        raise ValueError("dim must be divisible by 4 (bottleneck width dim/4)")
    rng = np.random.default_rng(seed)
    mid = dim // 4
    blocks = []
    for _ in range(n_blocks):
        blocks.append(BlockParams(
            down=Linear(w=rng.normal(0, dim ** -0.5, size=(dim, mid)),
                        b=np.zeros(mid)),
            up=Linear(w=rng.normal(0, mid ** -0.5, size=(mid, dim)),
                      b=np.zeros(dim)),
            gamma=0.0,
        ))
    return AdapterParams(blocks=blocks, lam=0.0)


def smooth_l1(pred, target, beta: float = SMOOTH_L1_BETA) -> float:
    pred = _check_map(pred, "pred")
    target = _check_map(target, "target")
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if beta <= 0:
        raise ValueError("beta must be > 0")
    d = np.abs(pred - target)
    loss = np.where(d < beta, 0.5 * d * d / beta, d - 0.5 * beta)
    return float(loss.mean())


def smooth_l1_grad(pred, target, beta: float = SMOOTH_L1_BETA) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    d = pred - target
    g = np.clip(d / beta, -1.0, 1.0)
    return g / d.size


def geo_fusion(v_rgb, z_geo, lam: float, proj: Linear) -> np.ndarray:
    """proj(v_rgb + lam * z_geo): the adaptive residual fusion path."""
    v = _check_map(v_rgb, "v_rgb")
    z = _check_map(z_geo, "z_geo")
    if v.shape != z.shape:
        raise ValueError(f"shape mismatch {v.shape} vs {z.shape}")
    return proj(v + lam * z)


def concat_fusion(v_rgb, z_geo, proj: Linear) -> np.ndarray:
    """proj([v_rgb, z_geo]): the channel-concatenation comparator."""
    v = _check_map(v_rgb, "v_rgb")
    z = _check_map(z_geo, "z_geo")
    if v.shape[0] != z.shape[0]:
        raise ValueError(f"location counts differ: {v.shape[0]} vs {z.shape[0]}")
    return proj(np.concatenate([v, z], axis=1))


def dice_loss(pred_probs, gt, eps: float = DICE_EPS) -> float:
    p = np.asarray(pred_probs, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    inter = float((p * g).sum())
    return 1.0 - (2.0 * inter + eps) / (float(p.sum()) + float(g.sum()) + eps)


def dice_grad(pred_probs, gt, eps: float = DICE_EPS) -> np.ndarray:
    p = np.asarray(pred_probs, dtype=np.float64)
    g = np.asarray(gt, dtype=np.float64)
    num = 2.0 * float((p * g).sum()) + eps
    den = float(p.sum()) + float(g.sum()) + eps
    return -(2.0 * g * den - num) / (den * den)


def bce_loss(pred_probs, gt, clip: float = BCE_CLIP) -> float:
    p = np.clip(np.asarray(pred_probs, dtype=np.float64), clip, 1.0 - clip)
    g = np.asarray(gt, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    return float(-(g * np.log(p) + (1.0 - g) * np.log1p(-p)).mean())


def bce_grad(pred_probs, gt, clip: float = BCE_CLIP) -> np.ndarray:
    p = np.clip(np.asarray(pred_probs, dtype=np.float64), clip, 1.0 - clip)
    g = np.asarray(gt, dtype=np.float64)
    return (-(g / p) + (1.0 - g) / (1.0 - p)) / p.size


def total_loss(l_txt: float, l_bce: float, l_dice: float,
               weights: LossWeights | None = None) -> float:
    w = weights or LossWeights()
    return w.lambda_txt * l_txt + w.lambda_mask * (l_bce + l_dice)


# ---------------------------------------------------------------------------
# JSON evaluation hook for the CLI: every operation callable on plain arrays.
# ---------------------------------------------------------------------------

def _linear_from_json(obj) -> Linear:
    return Linear(w=np.asarray(obj["w"], dtype=np.float64),
                  b=None if obj.get("b") is None else np.asarray(obj["b"], dtype=np.float64))


def evaluate_op(op: str, payload: dict):
    """Run one named operation on JSON-decoded inputs; returns JSON-safe data."""
    if op == "layer_norm":
        return layer_norm(payload["x"], eps=payload.get("eps", LAYERNORM_EPS)).tolist()
    if op == "group_norm":
        return group_norm(payload["x"], groups=payload.get("groups", GROUPNORM_GROUPS)).tolist()
    if op == "teacher_embed":
        return teacher_embed(payload["geo"], _linear_from_json(payload["proj"]),
                             clamp_range=payload.get("clamp_range", CLAMP_RANGE)).tolist()
    if op == "bottleneck_block":
        params = BlockParams(down=_linear_from_json(payload["down"]),
                             up=_linear_from_json(payload["up"]),
                             gamma=payload.get("gamma", 0.0),
                             groups=payload.get("groups", GROUPNORM_GROUPS),
                             activation=payload.get("activation", "relu"))
        return bottleneck_block(payload["x"], params).tolist()
    if op == "smooth_l1":
        return smooth_l1(payload["pred"], payload["target"],
                         beta=payload.get("beta", SMOOTH_L1_BETA))
    if op == "geo_fusion":
        return geo_fusion(payload["v_rgb"], payload["z_geo"], payload["lam"],
                          _linear_from_json(payload["proj"])).tolist()
    if op == "concat_fusion":
        return concat_fusion(payload["v_rgb"], payload["z_geo"],
                             _linear_from_json(payload["proj"])).tolist()
    if op == "dice_loss":
        return dice_loss(payload["pred"], payload["gt"], eps=payload.get("eps", DICE_EPS))
    if op == "bce_loss":
        return bce_loss(payload["pred"], payload["gt"])
    if op == "total_loss":
        weights = LossWeights(lambda_txt=payload.get("lambda_txt", 1.0),
                              lambda_mask=payload.get("lambda_mask", 1.0))
        return total_loss(payload["l_txt"], payload["l_bce"], payload["l_dice"], weights)
    raise ValueError(f"unknown operation {op!r}")
