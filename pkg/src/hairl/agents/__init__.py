"""Policies and the two RL learners: PPO and DQN."""

from hairl.agents.dqn import (DQNAgent, DQNConfig, QFunction, ReplayBuffer, dqn_td_loss, dqn_update,
                              epsilon_greedy, linear_epsilon, td_targets, train_dqn)
from hairl.agents.policy import Policy, greedy_from_logits, masked_log_softmax
from hairl.agents.ppo import (PPOAgent, PPOConfig, PPOOptimizers, Rollout, RolloutBatch, build_batch,
                              clipped_surrogate, collect_rollout, compute_gae, evaluate_policy,
                              ppo_update, train_ppo)


def policy_logprob(policy, obs, action, mask=None) -> float:
    return float(policy.log_prob(obs, [action], mask)[0])


def sample_action(policy, obs, rng, mask=None):
    a, logp = policy.sample(obs, rng, mask)
    return a[0], float(logp[0])
