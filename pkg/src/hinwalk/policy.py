"""Encoder-decoder policy over schema actions, its exact gradients, and Adam.

Encoder: a two-layer LSTM fed ``[r_prev || t_cur]``; its top output S_i is
concatenated with ``t_cur``, ``r_q`` and ``t_tgt - r_q``. Decoder: a ReLU MLP
whose output is dotted with each candidate row ``[r_c || t_c]`` and passed
through a softmax. All arithmetic is float64 numpy; backpropagation through
the unrolled episode is written out by hand.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingTable
from .env import STAY, SchemaEnv, Trajectory, State, Action
from .errors import DataError, NumericError
from .graph import Query

PARAM_NAMES = ("lstm0_W", "lstm0_b", "lstm1_W", "lstm1_b", "W1", "b1", "W2", "b2")
CHECKPOINT_VERSION = 1


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _glorot(rng, rows, cols):
    lim = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-lim, lim, (rows, cols))


@dataclass
class PolicyParams:
    tensors: dict
    d_e: int
    d_h: int
    emb: EmbeddingTable | None = field(default=None, repr=False)

    @classmethod
    def init(cls, d_e: int, d_h: int, seed=0, emb: EmbeddingTable | None = None) -> "PolicyParams":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        t = {}
        in0 = 2 * d_e
        # LSTM gate blocks (i, f, g, o) are initialised independently
        t["lstm0_W"] = np.vstack([_glorot(rng, d_h, in0 + d_h) for _ in range(4)])
        t["lstm0_b"] = np.zeros(4 * d_h)
        t["lstm1_W"] = np.vstack([_glorot(rng, d_h, 2 * d_h) for _ in range(4)])
        t["lstm1_b"] = np.zeros(4 * d_h)
        t["W1"] = _glorot(rng, d_h, d_h + 3 * d_e)
        t["b1"] = np.zeros(d_h)
        t["W2"] = _glorot(rng, 2 * d_e, d_h)
        t["b2"] = np.zeros(2 * d_e)
        return cls(t, d_e, d_h, emb)

    @classmethod
    def zeros(cls, d_e: int, d_h: int, emb=None) -> "PolicyParams":
        p = cls.init(d_e, d_h, 0, emb)
        return p.zeros_like()

    def zeros_like(self) -> "PolicyParams":
        return PolicyParams({k: np.zeros_like(v) for k, v in self.tensors.items()},
                            self.d_e, self.d_h, self.emb)

    def copy(self) -> "PolicyParams":
        return PolicyParams({k: v.copy() for k, v in self.tensors.items()},
                            self.d_e, self.d_h, self.emb)

    def __getitem__(self, key):
        return self.tensors[key]

    def check_shapes(self) -> None:
        d_e, d_h = self.d_e, self.d_h
        want = {
            "lstm0_W": (4 * d_h, 2 * d_e + d_h), "lstm0_b": (4 * d_h,),
            "lstm1_W": (4 * d_h, 2 * d_h), "lstm1_b": (4 * d_h,),
            "W1": (d_h, d_h + 3 * d_e), "b1": (d_h,),
            "W2": (2 * d_e, d_h), "b2": (2 * d_e,),
        }
        for k, shape in want.items():
            if self.tensors[k].shape != shape:
                raise DataError(f"{k} has shape {self.tensors[k].shape}, expected {shape}")


# ---------------------------------------------------------------------------
# building blocks


def lstm_cell(W, b, x, h_prev, c_prev):
    """One LSTM step on a batch; returns (h, c, cache)."""
    d_h = h_prev.shape[-1]
    xh = np.concatenate([x, h_prev], axis=-1)
    z = xh @ W.T + b
    i = _sigmoid(z[..., :d_h])
    f = _sigmoid(z[..., d_h:2 * d_h])
    g = np.tanh(z[..., 2 * d_h:3 * d_h])
    o = _sigmoid(z[..., 3 * d_h:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (xh, i, f, g, o, c_prev, tc)


def lstm_cell_backward(W, cache, dh, dc):
    """Returns (dW, db, dx, dh_prev, dc_prev)."""
    xh, i, f, g, o, c_prev, tc = cache
    d_h = dh.shape[-1]
    dct = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dct * g * i * (1.0 - i),
        dct * c_prev * f * (1.0 - f),
        dct * i * (1.0 - g * g),
        dh * tc * o * (1.0 - o),
    ], axis=-1)
    dW = dz.T @ xh
    db = dz.sum(axis=0)
    dxh = dz @ W
    n_in = xh.shape[-1] - d_h
    return dW, db, dxh[:, :n_in], dxh[:, n_in:], dct * f


def zero_hidden(d_h: int, batch: int | None = None):
    shape = (d_h,) if batch is None else (batch, d_h)
    return ((np.zeros(shape), np.zeros(shape)), (np.zeros(shape), np.zeros(shape)))


def encode_step(params: PolicyParams, prev_hidden, prev_rel, cur_type):
    """Advance the two-layer encoder by one step.

    ``prev_hidden`` is ``((h0, c0), (h1, c1))``; vectors may be 1-D or batched.
    Returns the new hidden state and S_i (the top-layer output).
    """
    single = np.ndim(prev_rel) == 1
    x = np.concatenate([np.atleast_2d(prev_rel), np.atleast_2d(cur_type)], axis=-1)
    (h0, c0), (h1, c1) = [(np.atleast_2d(h), np.atleast_2d(c)) for h, c in prev_hidden]
    h0, c0, _ = lstm_cell(params["lstm0_W"], params["lstm0_b"], x, h0, c0)
    h1, c1, _ = lstm_cell(params["lstm1_W"], params["lstm1_b"], h0, h1, c1)
    if single:
        return ((h0[0], c0[0]), (h1[0], c1[0])), h1[0]
    return ((h0, c0), (h1, c1)), h1


def build_encoding(S, t_cur, r_q, t_tgt):
    return np.concatenate([S, t_cur, r_q, t_tgt - r_q], axis=-1)


def masked_log_softmax(scores, valid=None):
    if valid is None:
        valid = np.ones(scores.shape, dtype=bool)
    s = np.where(valid, scores, -np.inf)
    m = s.max(axis=-1, keepdims=True)
    shifted = s - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    return shifted - lse


def decoder_output(params: PolicyParams, enc):
    z1 = enc @ params["W1"].T + params["b1"]
    a1 = np.maximum(z1, 0.0)
    return a1 @ params["W2"].T + params["b2"], z1, a1


def action_distribution(params: PolicyParams, enc, candidates, valid=None) -> np.ndarray:
    """Softmax over candidates; ``candidates`` is a list of (rel vec, type vec)."""
    if len(candidates) == 0:
        raise ValueError("need at least one candidate")
    D = np.stack([np.concatenate([r, t]) for r, t in candidates])
    out, _, _ = decoder_output(params, np.atleast_2d(enc))
    scores = D @ out[0]
    return np.exp(masked_log_softmax(scores, valid))


# ---------------------------------------------------------------------------
# batched episodes


@dataclass
class EpisodePass:
    """Forward results for a batch of episodes (and the caches for backprop)."""
    queries: list
    choice: np.ndarray       # (B, H) candidate index taken at each step
    rel: np.ndarray          # (B, H) relation row taken (stay_index for STAY)
    dst: np.ndarray          # (B, H) type reached
    log_probs: np.ndarray    # (B, H) log-prob of the chosen action
    entropies: np.ndarray    # (B, H)
    caches: list = field(default_factory=list, repr=False)


def _embedding_mats(params: PolicyParams, env: SchemaEnv):
    emb = params.emb
    if emb is None or emb.type_vecs is None:
        raise DataError("policy has no type/relation embeddings attached")
    relM = emb.relation_matrix()
    if relM.shape[0] != env.n_relations + 2:
        raise DataError("embedding relation count does not match the environment")
    return relM, emb.type_vecs


def run_episodes(params: PolicyParams, env: SchemaEnv, queries, rng=None, forced=None,
                 keep_cache=False, greedy=False) -> EpisodePass:
    """Roll the policy for ``env.max_hops`` steps on every query.

    ``forced`` (B, H) fixes the candidate index at each step (teacher
    forcing); otherwise actions are sampled with ``rng`` (or argmax if
    ``greedy``).
    """
    relM, typM = _embedding_mats(params, env)
    rel_tab, dst_tab, valid_tab = env.candidate_table()
    B, H, d_h = len(queries), env.max_hops, params.d_h
    src = np.array([q.src_type for q in queries], dtype=np.int64)
    rq = np.array([q.relation for q in queries], dtype=np.int64)
    tgt = np.array([q.tgt_type for q in queries], dtype=np.int64)
    rq_vec, tgt_vec = relM[rq], typM[tgt]

    cur = src.copy()
    prev = np.full(B, env.start_index, dtype=np.int64)
    moved = np.zeros(B, dtype=bool)
    (h0, c0), (h1, c1) = zero_hidden(d_h, B)
    choice = np.zeros((B, H), dtype=np.int64)
    rel_taken = np.zeros((B, H), dtype=np.int64)
    dst_taken = np.zeros((B, H), dtype=np.int64)
    lps = np.zeros((B, H))
    ents = np.zeros((B, H))
    caches = []
    rows = np.arange(B)
    for i in range(H):
        x = np.concatenate([relM[prev], typM[cur]], axis=1)
        h0, c0, cache0 = lstm_cell(params["lstm0_W"], params["lstm0_b"], x, h0, c0)
        h1, c1, cache1 = lstm_cell(params["lstm1_W"], params["lstm1_b"], h0, h1, c1)
        enc = np.concatenate([h1, typM[cur], rq_vec, tgt_vec - rq_vec], axis=1)
        out, z1, a1 = decoder_output(params, enc)
        c_rel, c_dst = rel_tab[cur], dst_tab[cur]
        valid = valid_tab[cur].copy()
        if env.mask_direct:
            valid &= ~((~moved)[:, None] & (c_rel == rq[:, None]) & (c_dst == tgt[:, None]))
        D = np.concatenate([relM[c_rel], typM[c_dst]], axis=2)
        scores = np.einsum("bad,bd->ba", D, out)
        logp = masked_log_softmax(scores, valid)
        p = np.where(valid, np.exp(logp), 0.0)
        plogp = np.where(valid, p * np.where(valid, logp, 0.0), 0.0)
        ent = -plogp.sum(axis=1)
        if not (np.all(np.isfinite(scores[valid])) and np.all(np.isfinite(ent))):
            raise NumericError("non-finite policy scores", step=i)

        if forced is not None:
            a = np.asarray(forced[:, i], dtype=np.int64)
            if not np.all(valid[rows, a]):
                raise NumericError("forced action is not a legal candidate", step=i)
        elif greedy:
            a = np.argmax(np.where(valid, logp, -np.inf), axis=1)
        else:
            if rng is None:
                raise ValueError("sampling needs an rng")
            u = rng.random(B)
            cdf = np.cumsum(p, axis=1)
            a = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
            # guard against rounding landing on a padded slot
            last_valid = valid.shape[1] - 1 - np.argmax(valid[:, ::-1], axis=1)
            a = np.minimum(a, last_valid)
            bad = ~valid[rows, a]
            if bad.any():
                a[bad] = np.argmax(valid[bad], axis=1)
        choice[:, i] = a
        rel_taken[:, i] = c_rel[rows, a]
        dst_taken[:, i] = c_dst[rows, a]
        lps[:, i] = logp[rows, a]
        ents[:, i] = ent
        if keep_cache:
            caches.append(dict(cache0=cache0, cache1=cache1, enc=enc, z1=z1, a1=a1, D=D,
                               p=p, logp=logp, valid=valid, a=a, ent=ent))
        prev = rel_taken[:, i]
        moved |= rel_taken[:, i] != env.stay_index
        cur = dst_taken[:, i]
    return EpisodePass(list(queries), choice, rel_taken, dst_taken, lps, ents, caches)


def backward_episodes(params: PolicyParams, ep: EpisodePass, logp_coef, ent_coef: float):
    """Gradient of  sum_j sum_i [-logp_coef[j] * log pi(a_ij) - ent_coef * H_ij].

    ``ep`` must come from ``run_episodes(..., keep_cache=True)``.
    """
    grads = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    logp_coef = np.asarray(logp_coef, dtype=float)
    B = len(ep.queries)
    d_h = params.d_h
    W0, W1l = params["lstm0_W"], params["lstm1_W"]
    dS = []
    rows = np.arange(B)
    for i, c in enumerate(ep.caches):
        p, logp, valid = c["p"], c["logp"], c["valid"]
        onehot = np.zeros_like(p)
        onehot[rows, c["a"]] = 1.0
        safe_logp = np.where(valid, logp, 0.0)
        ds = -logp_coef[:, None] * (onehot - p) + ent_coef * p * (safe_logp + c["ent"][:, None])
        ds = np.where(valid, ds, 0.0)
        d_out = np.einsum("ba,bad->bd", ds, c["D"])
        grads["W2"] += d_out.T @ c["a1"]
        grads["b2"] += d_out.sum(axis=0)
        dz1 = (d_out @ params["W2"]) * (c["z1"] > 0)
        grads["W1"] += dz1.T @ c["enc"]
        grads["b1"] += dz1.sum(axis=0)
        d_enc = dz1 @ params["W1"]
        if not np.all(np.isfinite(d_enc)):
            raise NumericError("non-finite gradient", step=i)
        dS.append(d_enc[:, :d_h])

    dh0n = np.zeros((B, d_h))
    dc0n = np.zeros((B, d_h))
    dh1n = np.zeros((B, d_h))
    dc1n = np.zeros((B, d_h))
    for i in reversed(range(len(ep.caches))):
        c = ep.caches[i]
        dW, db, dx1, dh1n, dc1n = lstm_cell_backward(W1l, c["cache1"], dS[i] + dh1n, dc1n)
        grads["lstm1_W"] += dW
        grads["lstm1_b"] += db
        dW, db, _, dh0n, dc0n = lstm_cell_backward(W0, c["cache0"], dx1 + dh0n, dc0n)
        grads["lstm0_W"] += dW
        grads["lstm0_b"] += db
        if not np.all(np.isfinite(dh0n)):
            raise NumericError("non-finite gradient in recurrent backprop", step=i)
    return PolicyParams(grads, params.d_e, params.d_h, params.emb)


# ---------------------------------------------------------------------------
# trajectory-level API


@dataclass
class RolloutBatch:
    trajectories: list
    rewards: np.ndarray
    entropies: np.ndarray              # (B, H) per-step policy entropies
    choices: np.ndarray | None = None  # (B, H) candidate indices, if known
    records: list = field(default_factory=list, repr=False)


def episodes_to_trajectories(env: SchemaEnv, ep: EpisodePass) -> list[Trajectory]:
    out = []
    for b, q in enumerate(ep.queries):
        s = env.reset(q)
        steps = []
        for i in range(env.max_hops):
            a = env.action_from_table(ep.rel[b, i], ep.dst[b, i])
            steps.append((s, a, float(ep.log_probs[b, i])))
            s = State(current_type=a.dst_type, query=q, step=s.step + 1,
                      moved=s.moved or not a.is_stay)
        tr = Trajectory(q, steps)
        tr.arrived = int(s.moved and s.current_type == q.tgt_type)
        out.append(tr)
    return out


def trajectory_choices(env: SchemaEnv, trajectories) -> np.ndarray:
    """Map each trajectory's actions to candidate-table indices."""
    rel_tab, dst_tab, valid_tab = env.candidate_table()
    out = np.zeros((len(trajectories), env.max_hops), dtype=np.int64)
    for b, tr in enumerate(trajectories):
        if len(tr.steps) != env.max_hops:
            raise DataError(f"trajectory has {len(tr.steps)} steps, expected {env.max_hops}")
        for i, (s, a, _) in enumerate(tr.steps):
            r = env.stay_index if a.is_stay else a.relation
            hit = np.nonzero(valid_tab[s.current_type] & (rel_tab[s.current_type] == r)
                             & (dst_tab[s.current_type] == a.dst_type))[0]
            if len(hit) != 1:
                raise DataError(f"action {a} is not a candidate at type {s.current_type}")
            out[b, i] = hit[0]
    return out


def trajectory_log_prob_entropy(params: PolicyParams, env: SchemaEnv, tr: Trajectory):
    """(sum of log-probs of the taken actions, sum of per-step entropies)."""
    forced = trajectory_choices(env, [tr])
    ep = run_episodes(params, env, [tr.query], forced=forced)
    return float(ep.log_probs[0].sum()), float(ep.entropies[0].sum())


def batch_loss(params: PolicyParams, env: SchemaEnv, batch: RolloutBatch, baseline: float,
               beta: float) -> float:
    """The scalar the gradient below differentiates (used by checks)."""
    choices = batch.choices if batch.choices is not None else trajectory_choices(env, batch.trajectories)
    ep = run_episodes(params, env, [t.query for t in batch.trajectories], forced=choices)
    B = len(batch.trajectories)
    adv = np.asarray(batch.rewards, dtype=float) - baseline
    return float(-(adv * ep.log_probs.sum(axis=1)).sum() / B - beta * ep.entropies.mean())


def policy_gradients(params: PolicyParams, env: SchemaEnv, batch: RolloutBatch, baseline: float,
                     beta: float) -> PolicyParams:
    """Gradient of the REINFORCE loss with entropy bonus.

    L = -(1/B) sum_j (R_j - b) sum_i log pi(A_ij | S_ij) - beta * mean_ij H_ij
    with B = N*K trajectories. Embeddings are frozen and get no gradient.
    """
    B = len(batch.trajectories)
    if B == 0:
        raise ValueError("empty rollout batch")
    choices = batch.choices if batch.choices is not None else trajectory_choices(env, batch.trajectories)
    ep = run_episodes(params, env, [t.query for t in batch.trajectories], forced=choices,
                      keep_cache=True)
    adv = np.asarray(batch.rewards, dtype=float) - baseline
    return backward_episodes(params, ep, adv / B, beta / (B * env.max_hops))


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def like(cls, params: PolicyParams) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.tensors.items()},
                   {k: np.zeros_like(v) for k, v in params.tensors.items()}, 0)


def adam_update(params: PolicyParams, grads: PolicyParams, alpha: float, t: int,
                state: AdamState, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> PolicyParams:
    """One bias-corrected Adam step (t counts from 1). Updates ``state`` in place."""
    out = {}
    c1 = 1 - beta1 ** t
    c2 = 1 - beta2 ** t
    for k, p in params.tensors.items():
        g = grads.tensors[k]
        if g.shape != p.shape:
            raise DataError(f"gradient shape mismatch for {k}")
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += eps
        step = m / c1
        step /= denom
        step *= alpha
        out[k] = p - step
    state.t = t
    return PolicyParams(out, params.d_e, params.d_h, params.emb)


class Adam:
    def __init__(self, params: PolicyParams, alpha: float = 0.0005):
        self.alpha = alpha
        self.state = AdamState.like(params)

    def step(self, params: PolicyParams, grads: PolicyParams) -> PolicyParams:
        return adam_update(params, grads, self.alpha, self.state.t + 1, self.state)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: PolicyParams, adam: Adam | None = None, rng=None,
                    extra: dict | None = None) -> None:
    """Versioned npz blob: parameters, optimiser moments, RNG state, embeddings."""
    blob = {f"param/{k}": v for k, v in params.tensors.items()}
    meta = {"version": CHECKPOINT_VERSION, "d_e": params.d_e, "d_h": params.d_h,
            "extra": extra or {}}
    if adam is not None:
        blob.update({f"adam_m/{k}": v for k, v in adam.state.m.items()})
        blob.update({f"adam_v/{k}": v for k, v in adam.state.v.items()})
        meta["adam_t"] = adam.state.t
        meta["alpha"] = adam.alpha
    if rng is not None:
        meta["rng"] = rng.bit_generator.state
    emb = params.emb
    if emb is not None:
        blob["emb/relation"] = emb.relation_vecs
        blob["emb/type"] = emb.type_vecs
        blob["emb/start"] = emb.start_vec
        blob["emb/stay"] = emb.stay_vec
        meta["emb_relation_names"] = list(emb.relation_names)
        meta["emb_type_names"] = list(emb.type_names)
    blob["meta"] = np.frombuffer(json.dumps(meta, default=int).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez_compressed(f, **blob)


def load_checkpoint(path):
    """Returns (params, adam or None, rng or None, extra dict)."""
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        tensors = {k: z[f"param/{k}"].copy() for k in PARAM_NAMES}
        emb = None
        if "emb/relation" in z.files:
            emb = EmbeddingTable(
                entity_vecs=np.zeros((0, meta["d_e"])),
                relation_vecs=z["emb/relation"].copy(), type_vecs=z["emb/type"].copy(),
                start_vec=z["emb/start"].copy(), stay_vec=z["emb/stay"].copy(),
                relation_names=tuple(meta.get("emb_relation_names", ())),
                type_names=tuple(meta.get("emb_type_names", ())),
            )
        params = PolicyParams(tensors, meta["d_e"], meta["d_h"], emb)
        params.check_shapes()
        adam = None
        if "adam_t" in meta:
            adam = Adam(params, meta.get("alpha", 0.0005))
            adam.state.m = {k: z[f"adam_m/{k}"].copy() for k in PARAM_NAMES}
            adam.state.v = {k: z[f"adam_v/{k}"].copy() for k in PARAM_NAMES}
            adam.state.t = meta["adam_t"]
    rng = None
    if "rng" in meta:
        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng"]
    return params, adam, rng, meta.get("extra", {})
