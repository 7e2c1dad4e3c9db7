"""Synthetic conversation datasets with known Bayes accuracy.

Each conversation carries one or two latent Markov chains over small symbol
alphabets (self-transition probability ``stay_prob``, uniform otherwise,
uniform start). Every utterance emits, per modality, a noisy copy of its
chain's current symbol: with probability ``*_flip`` the symbol is resampled
uniformly. Frames/tokens are the symbol's random prototype plus Gaussian
jitter.

Regimes:

``a`` context-free
    one i.i.d. chain over C symbols, label = current symbol, both modalities observe it.
``b`` context-dependent
    one Markov chain over C symbols, label = symbol ``window`` utterances
    earlier (clamped to the first utterance); both modalities observe the
    current symbol, so a single utterance only hints at its label.
``c`` complementary modalities
    two i.i.d. chains (audio, text); label = audio_symbol * K_text + text_symbol;
    each modality observes only its own chain.
``bc`` composite of b and c
    two Markov chains, each lagged by ``window``, combined as in ``c``.

Bayes accuracies are computed by enumerating every latent window the label
rule can see, pooled over utterance positions.
"""
import itertools
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, OutputExistsError
from .embfile import write_embedding_file
from .manifest import Utterance, write_manifest

REGIMES = ("a", "b", "c", "bc")
SIDECAR = "synthetic.json"


@dataclass
class SyntheticSpec:
    regime: str = "a"
    num_conversations: int = 200
    length: object = 20              # int, or [min, max] inclusive
    num_classes: int = 4             # regimes a, b (c, bc derive it)
    audio_symbols: int = 2           # regimes c, bc
    text_symbols: int = 2
    d_audio: int = 16
    d_text: int = 16
    window: int = 2
    stay_prob: float = 0.4
    audio_flip: float = 0.0
    text_flip: float = 0.0
    jitter: float = 0.05
    frames: tuple = (3, 8)
    tokens: tuple = (3, 8)
    splits: tuple = (0.7, 0.15, 0.15)
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        lo, hi = self.length_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad conversation length {self.length!r}")
        if self.num_conversations < 1:
            raise ConfigError("num_conversations must be >= 1")
        for name in ("stay_prob", "audio_flip", "text_flip"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.window < 0:
            raise ConfigError("window must be >= 0")
        if abs(sum(self.splits) - 1.0) > 1e-9 or min(self.splits) < 0:
            raise ConfigError("split fractions must be non-negative and sum to 1")
        self.frames = tuple(self.frames)
        self.tokens = tuple(self.tokens)
        self.splits = tuple(self.splits)

    @property
    def length_range(self):
        if isinstance(self.length, (list, tuple)):
            return int(self.length[0]), int(self.length[1])
        return int(self.length), int(self.length)

    @property
    def two_chains(self):
        return self.regime in ("c", "bc")

    @property
    def classes(self):
        return self.audio_symbols * self.text_symbols if self.two_chains else self.num_classes

    @property
    def lag(self):
        return self.window if self.regime in ("b", "bc") else 0

    def chain_alphabets(self):
        return (self.audio_symbols, self.text_symbols) if self.two_chains else (self.num_classes,)

    def chain_stay(self, k):
        # regimes a and c are i.i.d.: a uniform transition matrix
        return self.stay_prob if self.regime in ("b", "bc") else 1.0 / k


def transition_matrix(k, stay):
    if k == 1:
        return np.ones((1, 1))
    P = np.full((k, k), (1.0 - stay) / (k - 1))
    np.fill_diagonal(P, stay)
    return P


def _label(spec, firsts):
    if spec.two_chains:
        return firsts[0] * spec.text_symbols + firsts[1]
    return firsts[0]


def _chain_window_joint(k, P, lag):
    """P(s_{t-lag}, s_t) by enumerating every window s_{t-lag..t}."""
    joint = np.zeros((k, k))
    for window in itertools.product(range(k), repeat=lag + 1):
        p = 1.0 / k
        for a, b in zip(window[:-1], window[1:]):
            p *= P[a, b]
        joint[window[0], window[-1]] += p
    return joint


def _obs_matrix(k, flip):
    # P(observed | true)
    return (1.0 - flip) * np.eye(k) + flip / k


def position_weights(spec):
    lo, hi = spec.length_range
    lengths = np.arange(lo, hi + 1)
    w = np.array([(lengths > t).mean() for t in range(hi)])
    return w / w.sum()


def bayes_table(spec):
    """Pooled joint P(obs_audio, obs_text, label) over utterance positions."""
    ks = spec.chain_alphabets()
    Ps = [transition_matrix(k, spec.chain_stay(k)) for k in ks]
    ka_obs = ks[0]
    kt_obs = ks[-1]
    oa = _obs_matrix(ka_obs, spec.audio_flip)
    ot = _obs_matrix(kt_obs, spec.text_flip)
    table = np.zeros((ka_obs, kt_obs, spec.classes))
    for t, wt in enumerate(position_weights(spec)):
        lag = min(spec.lag, t)
        joints = [_chain_window_joint(k, P, lag) for k, P in zip(ks, Ps)]
        if spec.two_chains:
            (ja, jt), (Ka, Kt) = joints, ks
            for fa, la, ft, lt in itertools.product(range(Ka), range(Ka), range(Kt), range(Kt)):
                p = ja[fa, la] * jt[ft, lt]
                if p == 0.0:
                    continue
                y = _label(spec, (fa, ft))
                table[:, :, y] += wt * p * np.outer(oa[la], ot[lt])
        else:
            (j,), (K,) = joints, ks
            for f, last in itertools.product(range(K), range(K)):
                if j[f, last] == 0.0:
                    continue
                table[:, :, _label(spec, (f,))] += wt * j[f, last] * np.outer(oa[last], ot[last])
    return table


def bayes_accuracies(spec):
    table = bayes_table(spec)
    audio = float(table.sum(axis=1).max(axis=-1).sum())
    text = float(table.sum(axis=0).max(axis=-1).sum())
    joint = float(table.max(axis=-1).sum())
    noiseless = spec.audio_flip == 0.0 and spec.text_flip == 0.0
    return {
        "audio_single": audio,
        "text_single": text,
        "joint_single": joint,
        # every label is a latent symbol some utterance of the conversation emits
        "context_full": 1.0 if noiseless else None,
        "class_priors": table.sum(axis=(0, 1)).tolist(),
    }


def _sample_chain(rng, k, stay, L):
    P = transition_matrix(k, stay)
    s = np.empty(L, dtype=np.int64)
    s[0] = rng.integers(k)
    for t in range(1, L):
        s[t] = rng.choice(k, p=P[s[t - 1]])
    return s


def _observe(rng, s, k, flip):
    flips = rng.random(len(s)) < flip
    return np.where(flips, rng.integers(k, size=len(s)), s)


def _frames(rng, proto, n_range, jitter):
    T = int(rng.integers(n_range[0], n_range[1] + 1))
    return proto[None, :] + jitter * rng.standard_normal((T, proto.shape[0]))


def generate_synthetic(spec, out_dir):
    """Write manifest, embedding files and sidecar under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    if (out / "manifest.tsv").exists():
        raise OutputExistsError(f"{out} already holds a dataset")
    (out / "audio").mkdir(parents=True, exist_ok=True)
    (out / "text").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    ks = spec.chain_alphabets()
    ka, kt = ks[0], ks[-1]
    proto_a = rng.standard_normal((ka, spec.d_audio))
    proto_t = rng.standard_normal((kt, spec.d_text))

    n = spec.num_conversations
    perm = rng.permutation(n)
    n_train = int(round(spec.splits[0] * n))
    n_val = int(round(spec.splits[1] * n))
    split_of = {}
    for rank, c in enumerate(perm):
        split_of[int(c)] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")

    lo, hi = spec.length_range
    records = []
    for c in range(n):
        L = int(rng.integers(lo, hi + 1))
        chains = [_sample_chain(rng, k, spec.chain_stay(k), L) for k in ks]
        obs_a = _observe(rng, chains[0], ka, spec.audio_flip)
        obs_t = _observe(rng, chains[-1], kt, spec.text_flip)
        cid = f"c{c:04d}"
        for t in range(L):
            src = max(t - spec.lag, 0)
            y = _label(spec, tuple(int(ch[src]) for ch in chains))
            uid = f"{cid}_u{t:03d}"
            apath, tpath = f"audio/{uid}.emb", f"text/{uid}.emb"
            write_embedding_file(out / apath, _frames(rng, proto_a[obs_a[t]], spec.frames, spec.jitter))
            write_embedding_file(out / tpath, _frames(rng, proto_t[obs_t[t]], spec.tokens, spec.jitter))
            records.append(Utterance(cid, uid, t, split_of[c], y, apath, tpath))

    manifest = out / "manifest.tsv"
    write_manifest(manifest, records, spec.classes)
    bayes = bayes_accuracies(spec)
    sidecar = {
        "schema_version": 1,
        "regime": spec.regime,
        "seed": spec.seed,
        "num_classes": spec.classes,
        "spec": asdict(spec),
        "bayes": {k: v for k, v in bayes.items() if k != "class_priors"},
        "class_priors": bayes["class_priors"],
    }
    (out / SIDECAR).write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n")
    return manifest


def load_sidecar(dataset_dir):
    return json.loads((Path(dataset_dir) / SIDECAR).read_text())
