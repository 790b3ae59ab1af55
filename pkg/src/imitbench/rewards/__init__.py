"""Imitation reward constructions behind one provider interface."""
from .adversarial import (AdversarialProvider, Discriminator, ImitationReplay, adversarial_reward,
                          disc_logits, disc_loss, disc_train, fairl_reward, logit_reward,
                          make_discriminator)
from .base import ALGORITHMS, TAXONOMY, InputScaler, Properties, RewardProvider
from .bc import bc_nll, bc_train
from .dril import (DrilProvider, DropoutEnsemble, dril_pretrain, dril_reward, make_ensemble,
                   quantile_threshold, uncertainty)
from .kernel import (GmmilProvider, KernelConfig, gmmil_init, gmmil_reward, kernel_matrix,
                     median_heuristic, mmd2)
from .red import RedProvider, RndPair, make_rnd_pair, red_pretrain, red_reward

__all__ = [
    "ALGORITHMS", "TAXONOMY", "AdversarialProvider", "Discriminator", "DrilProvider",
    "DropoutEnsemble", "GmmilProvider", "ImitationReplay", "InputScaler", "KernelConfig",
    "Properties", "RedProvider", "RewardProvider", "RndPair", "adversarial_reward", "bc_nll",
    "bc_train", "disc_logits", "disc_loss", "disc_train", "dril_pretrain", "dril_reward",
    "fairl_reward", "gmmil_init", "gmmil_reward", "kernel_matrix", "logit_reward",
    "make_discriminator", "make_ensemble", "make_provider", "make_rnd_pair", "median_heuristic",
    "mmd2", "quantile_threshold", "red_pretrain", "red_reward", "uncertainty",
]


def make_provider(cfg, expert, rng):
    """Build the reward provider for ``cfg.algo`` (a :class:`RunConfig`)."""
    dtype = cfg.np_dtype
    algo = cfg.algo
    if algo in ("gail", "airl", "fairl"):
        return AdversarialProvider(algo, expert, rng, lr=cfg.imitation_lr,
                                   epochs=cfg.adversarial_epochs, r1_coef=cfg.r1_coef,
                                   replay_multiplier=cfg.replay_multiplier,
                                   batch_size=cfg.disc_batch_size, gamma=cfg.gamma,
                                   reward_cap=cfg.reward_cap, max_grad_norm=cfg.max_grad_norm,
                                   dtype=dtype)
    if algo == "gmmil":
        return GmmilProvider(expert, cfg.gmmil_self_similarity)
    if algo == "red":
        return RedProvider(expert, rng, cfg.imitation_epochs, cfg.imitation_lr,
                           cfg.red_output_dim, cfg.imitation_batch_size, cfg.max_grad_norm, dtype)
    if algo == "dril":
        return DrilProvider(expert, rng, cfg.imitation_epochs, cfg.imitation_lr,
                            cfg.dril_ensemble, cfg.dril_dropout, cfg.dril_quantile,
                            cfg.dril_statistic, cfg.imitation_batch_size, cfg.max_grad_norm, dtype)
    raise ValueError(f"no reward provider for algorithm {algo!r}")
