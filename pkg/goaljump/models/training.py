from typing import Dict, NamedTuple, Tuple

from .. import exceptions
from .episode import STAGES
from .section import Section


class PpoConfigAttributes:
    gamma = "gamma"
    lam = "gae_lambda"
    clip = "clip_ratio"
    learning_rate = "learning_rate"
    epochs = "epochs"
    minibatch_size = "minibatch_size"
    batch_size = "batch_size"
    n_envs = "n_envs"
    entropy_coef = "entropy_coef"
    value_coef = "value_coef"
    max_grad_norm = "max_grad_norm"
    normalize_advantages = "normalize_advantages"


class PpoConfig:
    """
    Optimization hyperparameters.

    :ivar float gamma: Discount.
    :ivar float lam: GAE lambda.
    :ivar float clip: Clip ratio epsilon.
    :ivar float learning_rate: Adam step size.
    :ivar int epochs: Passes over each batch.
    :ivar int minibatch_size: Samples per gradient step.
    :ivar int batch_size: Samples per iteration, split evenly over ``n_envs``.
    :ivar int n_envs: Rollout environments.
    :ivar float entropy_coef: Weight of the entropy bonus. The std is fixed, so this only shifts the loss.
    :ivar float value_coef: Weight of the value loss.
    :ivar float max_grad_norm: Global gradient-norm clip.
    :ivar bool normalize_advantages: Normalize advantages per batch.
    """

    def __init__(self, ppo):
        a = PpoConfigAttributes
        p = ppo if isinstance(ppo, Section) else Section(ppo, "ppo")
        self.gamma = p.number(a.gamma, positive=True)
        self.lam = p.number(a.lam, positive=True)
        for key, value in ((a.gamma, self.gamma), (a.lam, self.lam)):
            if value > 1.0:
                raise exceptions.ConfigError(f"{p.where(key)} must lie in (0, 1], got {value}")
        self.clip = p.number(a.clip, positive=True)
        self.learning_rate = p.number(a.learning_rate, positive=True)
        self.epochs = p.integer(a.epochs, positive=True)
        self.minibatch_size = p.integer(a.minibatch_size, positive=True)
        self.batch_size = p.integer(a.batch_size, positive=True)
        self.n_envs = p.integer(a.n_envs, positive=True)
        self.entropy_coef = p.number(a.entropy_coef, nonneg=True)
        self.value_coef = p.number(a.value_coef, nonneg=True)
        self.max_grad_norm = p.number(a.max_grad_norm, positive=True)
        self.normalize_advantages = p.flag(a.normalize_advantages)
        if self.batch_size % self.minibatch_size:
            raise exceptions.ConfigError(f"{p.where(a.batch_size)} ({self.batch_size}) must be divisible by "
                                         f"{p.where(a.minibatch_size)} ({self.minibatch_size})")
        if self.batch_size % self.n_envs:
            raise exceptions.ConfigError(f"{p.where(a.batch_size)} ({self.batch_size}) must be divisible by "
                                         f"{p.where(a.n_envs)} ({self.n_envs})")

    @property
    def steps_per_env(self) -> int:
        return self.batch_size // self.n_envs


class TrainingScheduleAttributes:
    iterations = "iterations"
    checkpoint_every = "checkpoint_every"
    finetune_iterations = "finetune_iterations"

    class Distill:
        section = "distill"
        iterations = "iterations"
        batch_size = "batch_size"
        holdout_size = "holdout_size"
        learning_rate = "learning_rate"
        epochs = "epochs"
        minibatch_size = "minibatch_size"


class DistillConfig:
    """
    Student encoder regression settings.

    :ivar int iterations: Collection/regression rounds.
    :ivar int batch_size: Student-driven samples per round.
    :ivar int holdout_size: Samples in the fixed held-out set.
    """

    def __init__(self, distill: Section):
        a = TrainingScheduleAttributes.Distill
        self.iterations = distill.integer(a.iterations, positive=True)
        self.batch_size = distill.integer(a.batch_size, positive=True)
        self.holdout_size = distill.integer(a.holdout_size, positive=True)
        self.learning_rate = distill.number(a.learning_rate, positive=True)
        self.epochs = distill.integer(a.epochs, positive=True)
        self.minibatch_size = distill.integer(a.minibatch_size, positive=True)


class TrainingSchedule:
    """
    Iteration counts of the curriculum.

    :ivar Dict[int, int] iterations: Iterations per stage.
    :ivar int checkpoint_every: Iterations between intermediate checkpoints.
    :ivar int finetune_iterations: PPO iterations of the frozen-encoder finetune.
    :ivar DistillConfig distill: Student regression settings.
    """

    def __init__(self, training):
        a = TrainingScheduleAttributes
        t = training if isinstance(training, Section) else Section(training, "training")
        iterations = t.sub(a.iterations)
        self.iterations: Dict[int, int] = {s: iterations.integer(f"stage{s}", positive=True) for s in STAGES}
        self.checkpoint_every = t.integer(a.checkpoint_every, positive=True)
        self.finetune_iterations = t.integer(a.finetune_iterations)
        if self.finetune_iterations < 0:
            raise exceptions.ConfigError(f"{t.where(a.finetune_iterations)} must be >= 0")
        self.distill = DistillConfig(t.sub(a.Distill.section))


class NetworkConfigAttributes:
    hidden = "hidden_units"
    value_hidden = "value_hidden_units"
    action_std = "action_std_rad"
    extrinsics_dim = "extrinsics_dim"
    expert_encoder_hidden = "expert_encoder_hidden_units"
    encoder = "encoder"
    encoder_layers = "encoder_layers"
    hidden_gain = "hidden_gain"
    output_gain = "output_gain"

    class Conv:
        kernel = "kernel"
        filters = "filters"
        stride = "stride"
        padding = "padding"


class EncoderVariant:
    ours = "ours"
    rma_original = "rma_original"
    all = (ours, rma_original)


class ConvSpec(NamedTuple):
    kernel: int
    filters: int
    stride: int
    padding: int


class NetworkConfig:
    """
    Network sizes and initialization.

    :ivar tuple hidden: Base MLP widths.
    :ivar tuple value_hidden: Value MLP widths.
    :ivar float action_std: Fixed std of the Gaussian head (rad).
    :ivar int extrinsics_dim: Size of the latent dynamics code.
    :ivar int expert_encoder_hidden: Width of the privileged-parameter MLP.
    :ivar str encoder: Long-history encoder geometry, see :class:`EncoderVariant`.
    :ivar Dict[str, Tuple[ConvSpec, ...]] encoder_layers: Convolution layers of every variant.
    """

    def __init__(self, network):
        a = NetworkConfigAttributes
        n = network if isinstance(network, Section) else Section(network, "network")
        self.hidden = tuple(n.integers(a.hidden))
        self.value_hidden = tuple(n.integers(a.value_hidden))
        self.action_std = n.number(a.action_std, positive=True)
        self.extrinsics_dim = n.integer(a.extrinsics_dim, positive=True)
        self.expert_encoder_hidden = n.integer(a.expert_encoder_hidden, positive=True)
        self.encoder = n.text(a.encoder, EncoderVariant.all)
        layers = n.sub(a.encoder_layers)
        self.encoder_layers: Dict[str, Tuple[ConvSpec, ...]] = {
            v: _conv_specs(layers, v) for v in EncoderVariant.all}
        self.hidden_gain = n.number(a.hidden_gain, positive=True)
        self.output_gain = n.number(a.output_gain, positive=True)


def _conv_specs(layers: Section, variant: str) -> Tuple[ConvSpec, ...]:
    a = NetworkConfigAttributes.Conv
    raw = layers[variant]
    if not isinstance(raw, list) or not raw:
        raise exceptions.ConfigError(f"{layers.where(variant)} must be a non-empty list of layers")
    specs = []
    for i, layer in enumerate(raw):
        s = Section(layer, f"{layers.where(variant)}[{i}]")
        padding = s.integer(a.padding)
        if padding < 0:
            raise exceptions.ConfigError(f"{s.where(a.padding)} must be >= 0, got {padding}")
        specs.append(ConvSpec(s.integer(a.kernel, positive=True), s.integer(a.filters, positive=True),
                              s.integer(a.stride, positive=True), padding))
    return tuple(specs)
