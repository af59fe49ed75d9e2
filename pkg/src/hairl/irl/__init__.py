"""AIRL and Hybrid-AIRL objectives, stochastic regularization and the IRL loop."""

from hairl.irl.losses import (DemoBatch, Discriminator, PolicyBatch, SRConfig, adversarial_terms,
                              airl_policy_loss, airl_policy_loss_and_grad, airl_reward,
                              disc_adversarial_loss, disc_adversarial_loss_and_grad, disc_output,
                              disc_supervised_loss, disc_supervised_loss_and_grad, encode_actions,
                              hybrid_disc_loss, hybrid_disc_loss_and_grad, hybrid_policy_loss,
                              log_sigmoid, mix, noise_sigmas, perturb_actions, supervised_policy_loss,
                              supervised_policy_loss_and_grad, supervised_terms)
from hairl.irl.train import HybridConfig, IRLResult, MODES, alignment_pct, irl_train

__all__ = [
    "DemoBatch", "Discriminator", "PolicyBatch", "SRConfig", "HybridConfig", "IRLResult", "MODES",
    "adversarial_terms", "airl_policy_loss", "airl_policy_loss_and_grad", "airl_reward",
    "alignment_pct", "disc_adversarial_loss", "disc_adversarial_loss_and_grad", "disc_output",
    "disc_supervised_loss", "disc_supervised_loss_and_grad", "encode_actions", "hybrid_disc_loss",
    "hybrid_disc_loss_and_grad", "hybrid_policy_loss", "irl_train", "log_sigmoid", "mix",
    "noise_sigmas", "perturb_actions", "supervised_policy_loss", "supervised_policy_loss_and_grad",
    "supervised_terms",
]
