"""
The policy architectures compared in the ablation, and the teacher-student procedures.

Every kind maps the same observation to the same 4 desired motor positions, so the environment
never needs to know which one it is driving. Tensors are named ``{kind}/{part}/...`` in
checkpoints, which is how a checkpoint is matched to its architecture.
"""
import copy
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import exceptions
from .env import ACTION_SIZE, Observation, ObservationDims
from .files import DistillColumns
from .models.training import ConvSpec, DistillConfig, EncoderVariant, NetworkConfig
from .nn import Adam, Conv1d, Dense, Flatten, GaussianHead, Module, PARAM_DTYPE, ReLU, Sequential, mlp
from .reference import ReferenceMotion


class PolicyKind:
    ours = "ours"
    residual = "residual"
    long_only = "long_only"
    short_only = "short_only"
    expert = "expert"
    rma_student = "rma_student"
    arma = "arma"
    all = (ours, residual, long_only, short_only, expert, rma_student, arma)
    # names accepted on the command line
    aliases = {"long": long_only, "short": short_only, "rma": rma_student}
    # kinds that encode the long history with a CNN straight into the base MLP
    long_encoder = (ours, residual, long_only)
    students = (rma_student, arma)

    @classmethod
    def parse(cls, name: str) -> str:
        """
        Resolve a kind or one of its aliases.

        :raises exceptions.ArchitectureError: If ``name`` is not a known kind.
        """
        kind = cls.aliases.get(name, name)
        if kind not in cls.all:
            raise exceptions.ArchitectureError(f"unknown architecture {name!r}, expected one of "
                                               f"{', '.join(cls.all + tuple(cls.aliases))}")
        return kind


class Part:
    base = "base"
    encoder = "encoder"
    extrinsics = "extrinsics"
    head = "head"
    value = "value"


@dataclass
class ObservationBatch:
    """
    Observations stacked along a leading batch axis.

    :ivar np.ndarray goal: (B, 4)
    :ivar np.ndarray preview: (B, preview)
    :ivar np.ndarray short_history: (B, short, 15)
    :ivar np.ndarray long_history: (B, long, 15)
    :ivar np.ndarray privileged: (B, 53)
    :ivar np.ndarray critic: (B, critic)
    """
    goal: np.ndarray
    preview: np.ndarray
    short_history: np.ndarray
    long_history: np.ndarray
    privileged: np.ndarray
    critic: np.ndarray

    @classmethod
    def stack(cls, observations: Sequence[Observation]) -> "ObservationBatch":
        return cls(*(np.stack([getattr(o, f) for o in observations]) for f in _FIELDS))

    @classmethod
    def concatenate(cls, batches: Sequence["ObservationBatch"]) -> "ObservationBatch":
        return cls(*(np.concatenate([getattr(b, f) for b in batches]) for f in _FIELDS))

    def __len__(self):
        return len(self.goal)

    def __getitem__(self, index) -> "ObservationBatch":
        return ObservationBatch(*(getattr(self, f)[index] for f in _FIELDS))


_FIELDS = ("goal", "preview", "short_history", "long_history", "privileged", "critic")


def conv_encoder(specs: Sequence[ConvSpec], channels: int, length: int,
                 rng: np.random.Generator) -> Tuple[List[Module], List[int], int]:
    """
    The long-history CNN: each convolution followed by a ReLU, then a flatten.

    :param specs: Convolution layers in order.
    :param channels: Features per history entry.
    :param length: History length.
    :return: (layers, temporal length after every convolution starting with the input, flat size)
    :raises exceptions.ArchitectureError: If the history is too short for the geometry.
    """
    layers: List[Module] = []
    lengths = [length]
    for spec in specs:
        conv = Conv1d(channels, spec.filters, spec.kernel, spec.stride, rng, math.sqrt(2.0), spec.padding)
        try:
            lengths.append(conv.output_length(lengths[-1]))
        except exceptions.DimensionError as e:
            raise exceptions.ArchitectureError(f"encoder does not fit a history of {length}: {e.detail}")
        layers += [conv, ReLU()]
        channels = spec.filters
    layers.append(Flatten())
    flat = lengths[-1] * channels
    return layers, lengths, flat


class Policy:
    """
    A Gaussian policy: a base MLP producing the mean action from the goal, the reference preview,
    a history block and, for most kinds, a latent code.

    ====================  ==========================  =====================================
    kind                  history block               latent
    ====================  ==========================  =====================================
    ours, residual        short history (4 steps)     CNN over the long history
    long_only             current entry only          CNN over the long history
    short_only            short history               none
    expert                short history               MLP over the privileged parameters
    rma_student, arma     short history               CNN over the long history to 8 values
    ====================  ==========================  =====================================

    :param kind: One of :class:`PolicyKind`.
    :type kind: str
    :param dims: Observation block sizes.
    :type dims: :class:`ObservationDims <goaljump.env.ObservationDims>`
    :param network: Sizes and initialization.
    :type network: :class:`NetworkConfig <goaljump.models.training.NetworkConfig>`
    :param rng: Initialization generator.
    :type rng: np.random.Generator
    :param encoder: Long-history encoder variant, ``network.encoder`` by default.
    :type encoder: Optional[str]
    :ivar set frozen: Names of the parts that updates must not touch.
    """

    def __init__(self, kind: str, dims: ObservationDims, network: NetworkConfig, rng: np.random.Generator,
                 encoder: Optional[str] = None):
        self.kind = PolicyKind.parse(kind)
        self.dims = dims
        self.variant = encoder or network.encoder
        if self.variant not in EncoderVariant.all:
            raise exceptions.ArchitectureError(f"unknown encoder variant {self.variant!r}")
        self.frozen = set()
        self.lengths: List[int] = []
        self.latent: Optional[Module] = None
        self.latent_part: Optional[str] = None
        self.latent_size = 0

        specs = network.encoder_layers[self.variant]
        if self.kind in PolicyKind.long_encoder:
            layers, self.lengths, self.latent_size = conv_encoder(specs, dims.entry, dims.long, rng)
            self.latent, self.latent_part = Sequential(layers), Part.encoder
        elif self.kind == PolicyKind.expert:
            self.latent = mlp(dims.privileged, [network.expert_encoder_hidden], network.extrinsics_dim, rng,
                              network.hidden_gain, 1.0)
            self.latent_part, self.latent_size = Part.extrinsics, network.extrinsics_dim
        elif self.kind in PolicyKind.students:
            layers, self.lengths, flat = conv_encoder(specs, dims.entry, dims.long, rng)
            layers.append(Dense(flat, network.extrinsics_dim, rng, 1.0))
            self.latent, self.latent_part = Sequential(layers), Part.encoder
            self.latent_size = network.extrinsics_dim

        history = dims.entry if self.kind == PolicyKind.long_only else dims.short * dims.entry
        self.input_size = dims.goal + dims.preview + history + self.latent_size
        self.base = mlp(self.input_size, network.hidden, ACTION_SIZE, rng, network.hidden_gain, network.output_gain)
        self.head = GaussianHead(ACTION_SIZE, network.action_std)

    @property
    def parts(self) -> Dict[str, Module]:
        parts = {Part.base: self.base}
        if self.latent is not None:
            parts[self.latent_part] = self.latent
        return parts

    def _latent_input(self, batch: ObservationBatch) -> np.ndarray:
        return batch.privileged if self.kind == PolicyKind.expert else batch.long_history

    def encode(self, batch: ObservationBatch) -> np.ndarray:
        """The latent code alone, (B, latent)."""
        if self.latent is None:
            raise exceptions.ArchitectureError(f"{self.kind} has no latent encoder")
        return self.latent.forward(self._latent_input(batch))

    def forward(self, batch: ObservationBatch) -> np.ndarray:
        """Mean action, (B, 4)."""
        n = len(batch)
        if self.kind == PolicyKind.long_only:
            history = batch.short_history[:, -1]
        else:
            history = batch.short_history.reshape(n, -1)
        parts = [batch.goal, batch.preview, history]
        if self.latent is not None:
            parts.append(self.encode(batch))
        x = np.concatenate(parts, axis=1)
        if x.shape[1] != self.input_size:
            raise exceptions.DimensionError(f"{self.kind} expects {self.input_size} base inputs, got {x.shape[1]}")
        return self.base.forward(x)

    def backward(self, grad_mean: np.ndarray):
        """Accumulate gradients of every part from d loss / d mean."""
        grad = self.base.backward(grad_mean)
        if self.latent is not None:
            self.latent.backward(grad[:, self.input_size - self.latent_size:])

    def act(self, observation: Observation, rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        (action, mean) for one observation. The action is the mean when ``rng`` is omitted.
        """
        mean = self.forward(ObservationBatch.stack([observation]))[0]
        self.clear_cache()
        action = mean if rng is None else self.head.sample(mean, rng)
        return action, mean

    def trainable(self) -> List[Tuple[str, Module, str]]:
        """Named tensors of the parts that are not frozen."""
        tensors = []
        for part, module in self.parts.items():
            if part not in self.frozen:
                tensors += list(module.named_tensors(f"{self.kind}/{part}/"))
        return tensors

    def zero_grad(self):
        for module in self.parts.values():
            module.zero_grad()

    def clear_cache(self):
        for module in self.parts.values():
            module.clear_cache()

    def n_parameters(self, part: Optional[str] = None) -> int:
        if part is not None:
            return self.parts[part].n_parameters() if part in self.parts else 0
        return sum(m.n_parameters() for m in self.parts.values())

    def state_dict(self) -> Dict[str, np.ndarray]:
        tensors = {}
        for part, module in self.parts.items():
            tensors.update(module.state_dict(f"{self.kind}/{part}/"))
        tensors[f"{self.kind}/{Part.head}/log_std"] = self.head.log_std.astype(PARAM_DTYPE)
        return tensors

    def load_state_dict(self, tensors: Dict[str, np.ndarray]):
        for part, module in self.parts.items():
            module.load_state_dict(tensors, f"{self.kind}/{part}/")
        name = f"{self.kind}/{Part.head}/log_std"
        if name in tensors:
            self.head.log_std = np.asarray(tensors[name], dtype=np.float64)

    def converted(self, kind: str) -> "Policy":
        """A copy under another kind of the same structure, eg. an RMA student as A-RMA."""
        kind = PolicyKind.parse(kind)
        same = {self.kind, kind} <= set(PolicyKind.students) or kind == self.kind
        if not same:
            raise exceptions.ArchitectureError(f"cannot convert {self.kind} into {kind}")
        policy = copy.deepcopy(self)
        policy.kind = kind
        policy.clear_cache()
        return policy


def build_policy(kind: str, dims: ObservationDims, network: NetworkConfig, seed: int = 0,
                 encoder: Optional[str] = None) -> Policy:
    """
    Construct a freshly initialized policy.

    :raises exceptions.ArchitectureError: On an unknown kind or an encoder that does not fit.
    """
    return Policy(kind, dims, network, np.random.default_rng([seed, 0x9A11]), encoder)


class ValueNetwork:
    """The critic, an MLP over the ground-truth state block."""

    def __init__(self, dims: ObservationDims, network: NetworkConfig, rng: np.random.Generator):
        self.net = mlp(dims.critic, network.value_hidden, 1, rng, network.hidden_gain, 1.0)

    def forward(self, batch: ObservationBatch) -> np.ndarray:
        return self.net.forward(batch.critic)[:, 0]

    def backward(self, grad: np.ndarray):
        self.net.backward(np.asarray(grad)[:, None])

    def predict(self, batch: ObservationBatch) -> np.ndarray:
        values = self.forward(batch)
        self.net.clear_cache()
        return values

    def named_tensors(self, kind: str):
        return self.net.named_tensors(f"{kind}/{Part.value}/")

    def state_dict(self, kind: str) -> Dict[str, np.ndarray]:
        return self.net.state_dict(f"{kind}/{Part.value}/")

    def load_state_dict(self, tensors: Dict[str, np.ndarray], kind: str):
        self.net.load_state_dict(tensors, f"{kind}/{Part.value}/")


def build_value(dims: ObservationDims, network: NetworkConfig, seed: int = 0) -> ValueNetwork:
    return ValueNetwork(dims, network, np.random.default_rng([seed, 0x7A1E]))


def checkpoint_tensors(policy: Policy, value: Optional[ValueNetwork] = None) -> Dict[str, np.ndarray]:
    tensors = policy.state_dict()
    if value is not None:
        tensors.update(value.state_dict(policy.kind))
    return tensors


def checkpoint_kinds(tensors: Dict[str, np.ndarray]) -> List[str]:
    return sorted({name.split("/", 1)[0] for name in tensors})


def restore(tensors: Dict[str, np.ndarray], dims: ObservationDims, network: NetworkConfig,
            kind: Optional[str] = None, encoder: Optional[str] = None) -> Tuple[Policy, Optional[ValueNetwork]]:
    """
    Rebuild a policy (and its critic, if saved) from checkpoint tensors.

    :param kind: The expected kind. Any single kind in the checkpoint is accepted if omitted.
    :param encoder: The encoder variant; every variant is tried if omitted, configured one first.
    :raises exceptions.ArchitectureError: If the checkpoint holds another kind or does not match
        any geometry.
    """
    kinds = checkpoint_kinds(tensors)
    if kind is None:
        if len(kinds) != 1:
            raise exceptions.ArchitectureError(f"checkpoint holds kinds {kinds}, name the one to load")
        kind = kinds[0]
    kind = PolicyKind.parse(kind)
    if kind not in kinds:
        raise exceptions.ArchitectureError(f"checkpoint holds {', '.join(kinds) or 'nothing'}, not {kind}")
    variants = [encoder] if encoder else [network.encoder] + [v for v in EncoderVariant.all if v != network.encoder]
    error = None
    for variant in variants:
        policy = build_policy(kind, dims, network, encoder=variant)
        try:
            policy.load_state_dict(tensors)
        except exceptions.ArchitectureError as e:
            error = error or e
            continue
        value = None
        if any(name.startswith(f"{kind}/{Part.value}/") for name in tensors):
            value = build_value(dims, network)
            value.load_state_dict(tensors, kind)
        return policy, value
    raise error


def action_postprocess(kind: str, raw: np.ndarray, ref: ReferenceMotion, ref_step: int) -> np.ndarray:
    """
    Desired motor positions from the network output. The residual kind adds the reference motor
    positions at the current reference step (the standing pose past the end of the jump).
    """
    if kind == PolicyKind.residual:
        return np.asarray(raw, dtype=float) + ref.motors_at(ref_step)
    return np.asarray(raw, dtype=float)


def extrinsics_mse(student: Policy, batch: ObservationBatch, targets: np.ndarray) -> float:
    prediction = student.encode(batch)
    student.clear_cache()
    return float(np.mean((prediction - targets) ** 2))


def distill_student(expert: Policy, collect: Callable[[Policy, int, int], ObservationBatch], config: DistillConfig,
                    network: NetworkConfig, seed: int = 0, encoder: Optional[str] = None,
                    logger: logging.Logger = logging.getLogger("goaljump")) -> Tuple[Policy, List[dict]]:
    """
    Train an RMA student's long-history encoder to reproduce the expert's extrinsics.

    The student's base MLP is a frozen copy of the expert's. Data comes from rollouts driven by
    the student itself, one fresh batch per round, and the encoder with the lowest held-out
    error is kept.

    :param expert: A trained expert policy.
    :param collect: ``collect(policy, n_samples, round)`` returns observations from rollouts of
        ``policy``; round -1 is the held-out set.
    :param config: Round counts and sizes.
    :param network: Sizes, used to build the student.
    :param seed: Initialization and minibatch seed.
    :return: (student, one :class:`DistillColumns <goaljump.files.DistillColumns>` row per round)
    :raises exceptions.ArchitectureError: If ``expert`` has no privileged-parameter encoder.
    """
    if expert.kind != PolicyKind.expert or expert.latent is None:
        raise exceptions.ArchitectureError(f"distillation needs an expert with an extrinsics encoder, got {expert.kind}")
    student = build_policy(PolicyKind.rma_student, expert.dims, network, seed, encoder)
    student.base.load_state_dict(expert.base.state_dict())
    student.head.log_std = expert.head.log_std.copy()
    student.frozen = {Part.base}
    optimizer = Adam(student.trainable(), config.learning_rate)
    rng = np.random.default_rng([seed, 0xD157])

    holdout = collect(student, config.holdout_size, -1)
    holdout_targets = expert.encode(holdout)
    expert.clear_cache()
    best = extrinsics_mse(student, holdout, holdout_targets)
    best_state = student.latent.state_dict()
    c = DistillColumns
    rows = []
    for it in range(config.iterations):
        batch = collect(student, config.batch_size, it)
        targets = expert.encode(batch)
        expert.clear_cache()
        for _ in range(config.epochs):
            order = rng.permutation(len(batch))
            for start in range(0, len(batch), config.minibatch_size):
                index = order[start:start + config.minibatch_size]
                prediction = student.encode(batch[index])
                student.zero_grad()
                student.latent.backward(2.0 * (prediction - targets[index]) / prediction.size)
                optimizer.step()
        train = extrinsics_mse(student, batch, targets)
        held_out = extrinsics_mse(student, holdout, holdout_targets)
        if held_out < best:
            best = held_out
            best_state = student.latent.state_dict()
        rows.append({c.iteration: it, c.train_mse: train, c.holdout_mse: held_out, c.best_holdout_mse: best})
        logger.info(f"Distill round {it}: train mse {train:.6g}, held-out mse {held_out:.6g}, best {best:.6g}")
    student.latent.load_state_dict(best_state)
    return student, rows


def to_arma(student: Policy) -> Policy:
    """The A-RMA starting point: the student with its encoder frozen and its base trainable."""
    if student.kind not in PolicyKind.students:
        raise exceptions.ArchitectureError(f"A-RMA starts from an RMA student, got {student.kind}")
    arma = student.converted(PolicyKind.arma)
    arma.frozen = {Part.encoder}
    return arma
