"""Conditional tabular WGAN with weight clipping.

One model covers both sampling modes: the class label is generated as a
5-slot categorical group AND fed as a condition input, so conditional
sampling can reject the (rare) rows whose generated label disagrees with
the requested one instead of rejecting against the raw class marginal.

Continuous outputs go through a sigmoid, categorical groups through
Gumbel-softmax (soft samples to the critic while training, argmax at
sampling time).  Both networks train with RMSProp; critic weights are
clipped to +/-weight_clip after every critic step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .dataset import ClassLabel, EncodedDataset, N_CLASSES, Transformer

__all__ = [
    "GanConfig",
    "GanModel",
    "SamplingStarvationError",
    "train_gan",
    "sample_unconditional",
    "sample_conditional",
    "export_synthetic",
]


class SamplingStarvationError(RuntimeError):
    """Conditional rejection sampling hit its attempt cap."""


@dataclass(frozen=True)
class GanConfig:
    epochs: int = 100
    batch_size: int = 500
    critic_steps: int = 5
    noise_dim: int = 128
    hidden: tuple = (256, 256)
    weight_clip: float = 0.01
    learning_rate: float = 5e-5
    gumbel_temperature: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.critic_steps < 1:
            raise ValueError("critic_steps must be >= 1")
        for name in ("batch_size", "noise_dim", "weight_clip", "learning_rate",
                     "gumbel_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class GanModel:
    generator: nn.DenseNet  # input noise_dim + 5, linear output over all slots
    critic: nn.DenseNet  # input record_dim + 5 condition slots, scalar output
    transformer: Transformer
    class_distribution: np.ndarray  # empirical training class shares
    config: GanConfig

    @property
    def record_dim(self):
        """Encoded feature dim plus the 5 generated label slots."""
        return self.transformer.total_dim + N_CLASSES

    def group_slices(self):
        """Categorical group slices in the generated vector, label last."""
        groups = [sl for _, sl in self.transformer.group_slices()]
        groups.append(slice(self.transformer.total_dim, self.record_dim))
        return groups

    def save(self, path):
        arrays = {}
        for prefix, net in (("gen", self.generator), ("crit", self.critic)):
            for i, (w, b) in enumerate(zip(net.weights, net.biases)):
                arrays[f"{prefix}_w{i}"] = w
                arrays[f"{prefix}_b{i}"] = b
        header = json.dumps(
            {
                "version": 1,
                "gen_activations": self.generator.activations,
                "crit_activations": self.critic.activations,
                "transformer": self.transformer.to_json(),
                "class_distribution": self.class_distribution.tolist(),
                "config": self.config.__dict__ | {"hidden": list(self.config.hidden)},
            }
        )
        np.savez(path, header=np.frombuffer(header.encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            header = json.loads(bytes(z["header"]).decode())
            if header.get("version") != 1:
                raise ValueError("unsupported GAN checkpoint version")
            nets = {}
            for prefix, acts_key in (("gen", "gen_activations"), ("crit", "crit_activations")):
                acts = header[acts_key]
                nets[prefix] = nn.DenseNet(
                    weights=[z[f"{prefix}_w{i}"].copy() for i in range(len(acts))],
                    biases=[z[f"{prefix}_b{i}"].copy() for i in range(len(acts))],
                    activations=list(acts),
                )
        cfg = dict(header["config"])
        cfg["hidden"] = tuple(cfg["hidden"])
        return cls(
            generator=nets["gen"],
            critic=nets["crit"],
            transformer=Transformer.from_json(header["transformer"]),
            class_distribution=np.array(header["class_distribution"]),
            config=GanConfig(**cfg),
        )


def _one_hot(ids, k):
    out = np.zeros((np.size(ids), k))
    out[np.arange(np.size(ids)), ids] = 1.0
    return out


def _build_model(transformer, class_distribution, config):
    record_dim = transformer.total_dim + N_CLASSES
    generator = nn.init_net(
        [config.noise_dim + N_CLASSES, *config.hidden, record_dim],
        ["relu"] * len(config.hidden) + ["linear"],
        seed=config.seed,
    )
    critic = nn.init_net(
        [record_dim + N_CLASSES, *config.hidden, 1],
        ["leaky_relu"] * len(config.hidden) + ["linear"],
        seed=config.seed + 1,
    )
    return GanModel(
        generator=generator,
        critic=critic,
        transformer=transformer,
        class_distribution=class_distribution,
        config=config,
    )


def _output_transform(raw, model, rng=None, hard=False):
    """Map the generator's linear output to a record vector.

    Both modes perturb the logits with Gumbel noise; soft mode keeps the
    tau-softmax relaxation for the critic, hard mode takes the argmax
    one-hot (a categorical draw).  Returns (vector, cache) where cache
    backs _output_backward.
    """
    tau = model.config.gumbel_temperature
    out = np.empty_like(raw)
    cont = model.transformer.continuous_indices()
    sig = 1.0 / (1.0 + np.exp(-raw[:, cont]))
    out[:, cont] = sig
    groups = model.group_slices()
    for sl in groups:
        logits = raw[:, sl]
        gumbel = -np.log(-np.log(rng.uniform(1e-12, 1.0, size=logits.shape)))
        if hard:
            onehot = np.zeros_like(logits)
            onehot[np.arange(logits.shape[0]), np.argmax(logits + gumbel, axis=1)] = 1.0
            out[:, sl] = onehot
        else:
            z = (logits + gumbel) / tau
            z -= z.max(axis=1, keepdims=True)
            e = np.exp(z)
            out[:, sl] = e / e.sum(axis=1, keepdims=True)
    return out, (cont, groups, sig, out)


def _output_backward(grad_out, cache, tau):
    """Gradient through sigmoid / Gumbel-softmax back to the linear output."""
    cont, groups, sig, out = cache
    grad_raw = np.zeros_like(grad_out)
    grad_raw[:, cont] = grad_out[:, cont] * sig * (1.0 - sig)
    for sl in groups:
        y = out[:, sl]
        g = grad_out[:, sl]
        inner = (g * y).sum(axis=1, keepdims=True)
        grad_raw[:, sl] = y * (g - inner) / tau
    return grad_raw


def _clip_weights(net, clip):
    for w, b in zip(net.weights, net.biases):
        np.clip(w, -clip, clip, out=w)
        np.clip(b, -clip, clip, out=b)


def _generate_soft(model, conditions, rng):
    noise = rng.standard_normal((conditions.shape[0], model.config.noise_dim))
    gen_in = np.concatenate([noise, conditions], axis=1)
    raw, tape = nn.forward(model.generator, gen_in)
    fake, cache = _output_transform(np.atleast_2d(raw), model, rng=rng)
    return fake, tape, cache


def train_gan(data, transformer, config):
    """Train the conditional WGAN on an encoded dataset with labels.

    Returns (model, loss_history); history rows are
    (generator_step, critic_loss, generator_loss).
    """
    if len(data) == 0:
        raise ValueError("empty training data")
    present = np.unique(data.labels)
    if len(present) < N_CLASSES:
        missing = sorted(set(range(N_CLASSES)) - set(present.tolist()))
        raise ValueError(f"classes absent from training data: {missing}")

    class_rows = [np.flatnonzero(data.labels == c) for c in range(N_CLASSES)]
    class_distribution = np.bincount(data.labels, minlength=N_CLASSES) / len(data)
    model = _build_model(transformer, class_distribution, config)
    real_full = np.concatenate([data.matrix, _one_hot(data.labels, N_CLASSES)], axis=1)

    gen_opt = nn.OptState.for_net(model.generator, "rmsprop", config.learning_rate)
    crit_opt = nn.OptState.for_net(model.critic, "rmsprop", config.learning_rate)
    rng = np.random.default_rng(config.seed)
    history = []
    steps_per_epoch = max(1, len(data) // config.batch_size)
    step = 0
    for _ in range(config.epochs):
        for _ in range(steps_per_epoch):
            # training-by-sampling: one condition class per minibatch
            c = int(rng.integers(0, N_CLASSES))
            cond = _one_hot(np.full(config.batch_size, c), N_CLASSES)
            critic_loss = 0.0
            for _ in range(config.critic_steps):
                idx = rng.choice(class_rows[c], size=config.batch_size, replace=True)
                real = real_full[idx]
                fake, _, _ = _generate_soft(model, cond, rng)
                m = config.batch_size
                score_fake, tape_f = nn.forward(model.critic, np.concatenate([fake, cond], axis=1))
                score_real, tape_r = nn.forward(model.critic, np.concatenate([real, cond], axis=1))
                # minimize mean(fake) - mean(real)
                critic_loss = float(score_fake.mean() - score_real.mean())
                grads_f, _ = nn.backward(model.critic, tape_f, np.full((m, 1), 1.0 / m))
                grads_r, _ = nn.backward(model.critic, tape_r, np.full((m, 1), -1.0 / m))
                grads = [(gf[0] + gr[0], gf[1] + gr[1]) for gf, gr in zip(grads_f, grads_r)]
                nn.opt_step(model.critic, grads, crit_opt)
                _clip_weights(model.critic, config.weight_clip)
            # generator step: minimize -mean(critic(fake))
            fake, gen_tape, cache = _generate_soft(model, cond, rng)
            m = config.batch_size
            score, tape = nn.forward(model.critic, np.concatenate([fake, cond], axis=1))
            gen_loss = float(-score.mean())
            _, grad_in = nn.backward(model.critic, tape, np.full((m, 1), -1.0 / m))
            grad_fake = grad_in[:, : model.record_dim]  # condition slots carry no gradient
            grad_raw = _output_backward(grad_fake, cache, config.gumbel_temperature)
            gen_grads, _ = nn.backward(model.generator, gen_tape, grad_raw)
            nn.opt_step(model.generator, gen_grads, gen_opt)
            history.append((step, critic_loss, gen_loss))
            step += 1
    return model, history


def _generate_hard(model, condition_ids, rng):
    cond = _one_hot(condition_ids, N_CLASSES)
    noise = rng.standard_normal((cond.shape[0], model.config.noise_dim))
    raw, _ = nn.forward(model.generator, np.concatenate([noise, cond], axis=1))
    vec, _ = _output_transform(np.atleast_2d(raw), model, rng=rng, hard=True)
    return vec


def _decode_rows(model, vectors):
    feat = vectors[:, : model.transformer.total_dim]
    return [model.transformer.decode(row) for row in feat]


def _generated_label_ids(model, vectors):
    label_group = vectors[:, model.transformer.total_dim :]
    return np.argmax(label_group, axis=1)


def sample_unconditional(model, n, seed=0):
    """n rows with conditions drawn from the empirical class distribution.

    Returns a list of (RawRecord, ClassLabel); the label is the condition.
    """
    rng = np.random.default_rng(seed)
    if n == 0:
        return []
    conditions = rng.choice(N_CLASSES, size=n, p=model.class_distribution)
    out = []
    for start in range(0, n, 2000):
        chunk = conditions[start : start + 2000]
        vectors = _generate_hard(model, chunk, rng)
        records = _decode_rows(model, vectors)
        out.extend((rec, ClassLabel(int(c))) for rec, c in zip(records, chunk))
    return out


def sample_conditional(model, target_class, n, seed=0, attempt_factor=50):
    """n rows for one class via rejection on the generated label group."""
    rng = np.random.default_rng(seed)
    kept = []
    attempts = 0
    cap = attempt_factor * max(n, 1)
    while len(kept) < n:
        want = n - len(kept)
        batch = min(max(2 * want, 200), cap - attempts)
        if batch <= 0:
            break
        ids = np.full(batch, target_class)
        vectors = _generate_hard(model, ids, rng)
        attempts += batch
        accept = _generated_label_ids(model, vectors) == target_class
        for row in vectors[accept][: n - len(kept)]:
            kept.append(model.transformer.decode(row[: model.transformer.total_dim]))
        if len(kept) < n and attempts >= cap:
            from .dataset import CLASS_NAMES

            raise SamplingStarvationError(
                f"conditional sampling starved for class {CLASS_NAMES[target_class]}: "
                f"{len(kept)}/{n} rows after {attempts} attempts"
            )
    return kept


def _format_value(value):
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return f"{value:.6g}"
    return str(value)


def export_synthetic(rows, path):
    """Write (RawRecord, ClassLabel) rows as NSL-KDD-format CSV.

    The constant num_outbound_cmds column is re-inserted as 0 so the file
    has the standard 41 feature columns; the label slot holds the class
    symbol (re-parse maps symbols directly).
    """
    from .dataset import _F20_RAW_INDEX

    with open(path, "w", encoding="utf-8") as fh:
        for record, label in rows:
            fields = [_format_value(v) for v in record.values]
            fields.insert(_F20_RAW_INDEX, "0")
            fields.append(label.symbol)
            fh.write(",".join(fields) + "\n")
