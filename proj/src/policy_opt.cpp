#include "rlhflab/policy_opt.hpp"

#include <algorithm>
#include <cmath>

#include "rlhflab/kernels.hpp"
#include "rlhflab/oracle.hpp"

namespace rlhflab {

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Sft: return "sft";
    case Algorithm::VanillaPg: return "vanilla_pg";
    case Algorithm::Ppo: return "ppo";
  }
  return "ppo";
}

std::string to_string(BaselineKind b) {
  switch (b) {
    case BaselineKind::None: return "none";
    case BaselineKind::ExactValue: return "exact_value";
    case BaselineKind::LearnedValue: return "learned_value";
  }
  return "none";
}

namespace {

void validate_policy(const GenerationMdp& mdp, const Policy& p, const char* name) {
  if (p.vocab_size() != mdp.vocab_size() || p.horizon() != mdp.horizon() ||
      p.num_contexts() != mdp.num_contexts())
    throw ContractViolation(std::string(name) + ": policy shape does not match the mdp");
}

void check_finite_gradient(const std::vector<double>& grad) {
  for (double g : grad)
    if (!std::isfinite(g))
      throw TrainingError("policy update produced a non-finite gradient", 0);
}

double grad_inf_norm(const std::vector<double>& grad) {
  double m = 0.0;
  for (double g : grad) m = std::max(m, std::fabs(g));
  return m;
}

}  // namespace

double ShapedReward::step(const GenerationMdp& mdp, ContextId c, uint32_t t,
                          uint64_t prefix_value, TokenId a) const {
  double r = 0.0;
  if (kl_coeff != 0.0) {
    StateIndex s = c * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
    r -= kl_coeff * (rollout->log_prob(s, a) - pre->log_prob(s, a));
  }
  if (t + 1 == mdp.horizon())
    r += terminal->at(c, prefix_value * mdp.vocab_size() + a);
  return r;
}

ValueFunction exact_value_shaped(const GenerationMdp& mdp, const Policy& policy,
                                 const ShapedReward& reward) {
  validate_policy(mdp, policy, "exact_value");
  if (reward.kl_coeff != 0.0 && (reward.pre == nullptr || reward.rollout == nullptr))
    throw ContractViolation("shaped reward with kl_coeff needs pre and rollout policies");
  ValueFunction vf(mdp.num_nonterminal_states());
  auto vals = vf.mutable_values();
  std::vector<double> row(mdp.vocab_size());
  uint32_t tmax = mdp.horizon();
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    for (uint32_t t = tmax; t-- > 0;) {
      uint64_t layer_count = mdp.layer_offset(t + 1) - mdp.layer_offset(t);
      StateIndex base = c * mdp.states_per_context() + mdp.layer_offset(t);
      for (uint64_t p = 0; p < layer_count; ++p) {
        StateIndex s = base + p;
        policy.fill_probs(s, row);
        double v = 0.0;
        for (TokenId a = 0; a < mdp.vocab_size(); ++a) {
          double q = reward.step(mdp, c, t, p, a);
          if (t + 1 < tmax)
            q += vals[c * mdp.states_per_context() + mdp.layer_offset(t + 1) +
                      p * mdp.vocab_size() + a];
          v += row[a] * q;
        }
        vals[s] = v;
      }
    }
  }
  return vf;
}

ValueFunction exact_value(const GenerationMdp& mdp, const Policy& policy,
                          const RewardFn& terminal_reward) {
  ShapedReward r;
  r.terminal = &terminal_reward;
  return exact_value_shaped(mdp, policy, r);
}

double q_value(const GenerationMdp& mdp, const ValueFunction& vf, const ShapedReward& reward,
               ContextId c, uint32_t t, uint64_t prefix_value, TokenId a) {
  double q = reward.step(mdp, c, t, prefix_value, a);
  if (t + 1 < mdp.horizon())
    q += vf.at(c * mdp.states_per_context() + mdp.layer_offset(t + 1) +
               prefix_value * mdp.vocab_size() + a);
  return q;
}

double advantage(const GenerationMdp& mdp, const ValueFunction& vf, const ShapedReward& reward,
                 ContextId c, uint32_t t, uint64_t prefix_value, TokenId a) {
  StateIndex s = c * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
  return q_value(mdp, vf, reward, c, t, prefix_value, a) - vf.at(s);
}

Policy closed_form_policy(const GenerationMdp& mdp, const Policy& pre, const RewardFn& reward,
                          double beta, uint64_t cap) {
  if (!(beta > 0.0)) throw ContractViolation("closed_form_policy: beta must be > 0");
  validate_policy(mdp, pre, "closed_form_policy");
  check_enumeration_cap(mdp, cap);
  Policy out(mdp, PolicyRole::Rlhf);
  auto logits = out.mutable_logits();
  uint64_t n = mdp.num_outputs();
  uint32_t v = mdp.vocab_size();
  std::vector<double> reward_row(n);
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    // Unnormalized log target mass over full outputs...
    std::vector<double> cur = pre.log_output_distribution(mdp, c);
    reward.fill_row(c, reward_row);
    kernels::axpy(cur.data(), 1.0 / beta, reward_row.data(), n);
    // ...then fold children into parents; each parent's logit row is its
    // children's log masses (max-shifted), and its own mass is their LSE.
    for (uint32_t t = mdp.horizon(); t-- > 0;) {
      uint64_t parents = cur.size() / v;
      std::vector<double> next(parents);
      StateIndex base = c * mdp.states_per_context() + mdp.layer_offset(t);
      for (uint64_t p = 0; p < parents; ++p) {
        const double* row = cur.data() + p * v;
        double m = kernels::max_value(row, v);
        double z = 0.0;
        for (uint32_t a = 0; a < v; ++a) {
          double shifted = row[a] - m;
          logits[(base + p) * v + a] = shifted;
          z += std::exp(shifted);
        }
        next[p] = m + std::log(z);
      }
      cur.swap(next);
    }
  }
  return out;
}

double kl_to_pre(const GenerationMdp& mdp, const Policy& policy, const Policy& pre,
                 std::span<const double> context_weights, uint64_t cap) {
  validate_policy(mdp, policy, "kl_to_pre");
  validate_policy(mdp, pre, "kl_to_pre");
  if (context_weights.size() != mdp.num_contexts())
    throw ContractViolation("kl_to_pre: context weight vector has wrong length");
  check_enumeration_cap(mdp, cap);
  uint64_t n = mdp.num_outputs();
  std::vector<double> q(n);
  double acc = 0.0;
  for (ContextId c = 0; c < mdp.num_contexts(); ++c) {
    if (context_weights[c] == 0.0) continue;
    std::vector<double> lq = policy.log_output_distribution(mdp, c);
    std::vector<double> lp = pre.log_output_distribution(mdp, c);
    for (uint64_t i = 0; i < n; ++i) q[i] = std::exp(lq[i]);
    acc += context_weights[c] * kernels::weighted_diff_sum(q.data(), lq.data(), lp.data(), n);
  }
  return acc;
}

double kl_to_pre(const GenerationMdp& mdp, const Policy& policy, const Policy& pre,
                 uint64_t cap) {
  return kl_to_pre(mdp, policy, pre, mdp.context_dist(), cap);
}

std::vector<double> sft_gradient(const GenerationMdp& mdp, const Policy& policy,
                                 const std::vector<Trajectory>& demos) {
  validate_policy(mdp, policy, "sft_update");
  if (demos.empty()) throw ContractViolation("sft_update: demo set is empty");
  std::vector<double> grad(policy.logits().size(), 0.0);
  std::vector<double> row(mdp.vocab_size());
  double inv = 1.0 / static_cast<double>(demos.size());
  for (const auto& demo : demos) {
    mdp.validate_context(demo.context);
    if (demo.output.size() != mdp.horizon())
      throw ContractViolation("sft_update: demo output length must equal horizon");
    uint64_t prefix_value = 0;
    for (uint32_t t = 0; t < mdp.horizon(); ++t) {
      TokenId a = demo.output[t];
      mdp.validate_token(a);
      StateIndex s = demo.context * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
      policy.fill_probs(s, row);
      grad[s * mdp.vocab_size() + a] += inv;
      kernels::axpy(grad.data() + s * mdp.vocab_size(), -inv, row.data(), mdp.vocab_size());
      prefix_value = prefix_value * mdp.vocab_size() + a;
    }
  }
  return grad;
}

Policy sft_update(const GenerationMdp& mdp, const Policy& policy,
                  const std::vector<Trajectory>& demos, double step_size) {
  std::vector<double> grad = sft_gradient(mdp, policy, demos);
  check_finite_gradient(grad);
  Policy out = policy;
  kernels::axpy(out.mutable_logits().data(), step_size, grad.data(), grad.size());
  return out;
}

std::vector<double> pg_gradient(const GenerationMdp& mdp, const Policy& policy,
                                const std::vector<Trajectory>& batch,
                                const ValueFunction* baseline) {
  validate_policy(mdp, policy, "pg_update");
  if (batch.empty()) throw ContractViolation("pg_update: batch is empty");
  std::vector<double> grad(policy.logits().size(), 0.0);
  std::vector<double> row(mdp.vocab_size());
  double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& traj : batch) {
    uint64_t prefix_value = 0;
    for (uint32_t t = 0; t < mdp.horizon(); ++t) {
      TokenId a = traj.output[t];
      StateIndex s = traj.context * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
      double adv = traj.terminal_reward - (baseline ? baseline->at(s) : 0.0);
      if (adv != 0.0) {
        policy.fill_probs(s, row);
        grad[s * mdp.vocab_size() + a] += inv * adv;
        kernels::axpy(grad.data() + s * mdp.vocab_size(), -inv * adv, row.data(),
                      mdp.vocab_size());
      }
      prefix_value = prefix_value * mdp.vocab_size() + a;
    }
  }
  return grad;
}

Policy pg_update(const GenerationMdp& mdp, const Policy& policy, const RewardFn& reward,
                 const OptimConfig& cfg, Rng& rng, ValueFunction* critic, PgDiagnostics* diag) {
  if (cfg.batch_size == 0) throw ContractViolation("pg_update: batch_size must be >= 1");
  std::vector<Trajectory> batch;
  batch.reserve(cfg.batch_size);
  double reward_sum = 0.0;
  for (uint32_t i = 0; i < cfg.batch_size; ++i) {
    batch.push_back(rollout(mdp, policy, rng, reward));
    reward_sum += batch.back().terminal_reward;
  }

  const ValueFunction* baseline = nullptr;
  ValueFunction exact(0);
  if (cfg.baseline == BaselineKind::ExactValue) {
    exact = exact_value(mdp, policy, reward);
    baseline = &exact;
  } else if (cfg.baseline == BaselineKind::LearnedValue) {
    if (critic == nullptr)
      throw ContractViolation("pg_update: learned_value baseline needs a critic");
    baseline = critic;
  }

  std::vector<double> grad = pg_gradient(mdp, policy, batch, baseline);
  check_finite_gradient(grad);

  if (cfg.baseline == BaselineKind::LearnedValue) {
    // Monte-Carlo critic regression toward the observed returns.
    auto vals = critic->mutable_values();
    for (const auto& traj : batch) {
      uint64_t prefix_value = 0;
      for (uint32_t t = 0; t < mdp.horizon(); ++t) {
        StateIndex s =
            traj.context * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
        vals[s] += cfg.critic_step_size * (traj.terminal_reward - vals[s]);
        prefix_value = prefix_value * mdp.vocab_size() + traj.output[t];
      }
    }
  }

  if (diag) {
    diag->mean_reward = reward_sum / cfg.batch_size;
    diag->grad_inf_norm = grad_inf_norm(grad);
  }
  Policy out = policy;
  kernels::axpy(out.mutable_logits().data(), cfg.step_size, grad.data(), grad.size());
  return out;
}

namespace {

struct TokenSample {
  StateIndex s = 0;
  TokenId a = 0;
  double adv = 0.0;
  double log_mu = 0.0;
};

double clipped_surrogate(const Policy& theta, const std::vector<TokenSample>& tokens,
                         double eps, double inv_batch) {
  double total = 0.0;
  for (const auto& tk : tokens) {
    double ratio = std::exp(theta.log_prob(tk.s, tk.a) - tk.log_mu);
    double unclipped = ratio * tk.adv;
    double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * tk.adv;
    total += std::min(unclipped, clipped);
  }
  return total * inv_batch;
}

}  // namespace

Policy ppo_update(const GenerationMdp& mdp, const Policy& policy, const Policy& old_policy,
                  const RewardFn& reward, const Policy& pre, const OptimConfig& cfg, Rng& rng,
                  ValueFunction* critic, PpoDiagnostics* diag) {
  validate_policy(mdp, policy, "ppo_update");
  validate_policy(mdp, old_policy, "ppo_update");
  validate_policy(mdp, pre, "ppo_update");
  if (cfg.batch_size == 0) throw ContractViolation("ppo_update: batch_size must be >= 1");
  if (!(cfg.clip_epsilon > 0.0)) throw ContractViolation("ppo_update: clip_epsilon must be > 0");
  if (!(cfg.beta >= 0.0)) throw ContractViolation("ppo_update: beta must be >= 0");

  ShapedReward shaped;
  shaped.terminal = &reward;
  shaped.pre = &pre;
  shaped.rollout = &old_policy;
  shaped.kl_coeff = cfg.beta;

  ValueFunction vf(0);
  if (cfg.baseline == BaselineKind::ExactValue)
    vf = exact_value_shaped(mdp, old_policy, shaped);
  if (cfg.baseline == BaselineKind::LearnedValue && critic == nullptr)
    throw ContractViolation("ppo_update: learned_value baseline needs a critic");

  uint32_t tmax = mdp.horizon();
  std::vector<TokenSample> tokens;
  tokens.reserve(static_cast<size_t>(cfg.batch_size) * tmax);
  std::vector<double> step_rewards(tmax);
  std::vector<StateIndex> states(tmax);
  double reward_sum = 0.0;
  double shaped_sum = 0.0;

  for (uint32_t i = 0; i < cfg.batch_size; ++i) {
    Trajectory traj = rollout(mdp, old_policy, rng, reward);
    reward_sum += traj.terminal_reward;
    uint64_t prefix_value = 0;
    for (uint32_t t = 0; t < tmax; ++t) {
      states[t] = traj.context * mdp.states_per_context() + mdp.layer_offset(t) + prefix_value;
      step_rewards[t] = shaped.step(mdp, traj.context, t, prefix_value, traj.output[t]);
      prefix_value = prefix_value * mdp.vocab_size() + traj.output[t];
    }
    // Return-to-go of the shaped reward.
    double g = 0.0;
    std::vector<double> rtg(tmax);
    for (uint32_t t = tmax; t-- > 0;) {
      g += step_rewards[t];
      rtg[t] = g;
    }
    shaped_sum += rtg[0];

    prefix_value = 0;
    for (uint32_t t = 0; t < tmax; ++t) {
      TokenSample tk;
      tk.s = states[t];
      tk.a = traj.output[t];
      tk.log_mu = old_policy.log_prob(tk.s, tk.a);
      switch (cfg.baseline) {
        case BaselineKind::ExactValue:
          tk.adv = advantage(mdp, vf, shaped, traj.context, t, prefix_value, tk.a);
          break;
        case BaselineKind::LearnedValue: {
          double next_v = 0.0;
          if (t + 1 < tmax)
            next_v = critic->at(traj.context * mdp.states_per_context() +
                                mdp.layer_offset(t + 1) +
                                prefix_value * mdp.vocab_size() + tk.a);
          tk.adv = step_rewards[t] + next_v - critic->at(tk.s);
          break;
        }
        case BaselineKind::None: tk.adv = rtg[t]; break;
      }
      tokens.push_back(tk);
      prefix_value = prefix_value * mdp.vocab_size() + traj.output[t];
    }

    if (cfg.baseline == BaselineKind::LearnedValue) {
      auto vals = critic->mutable_values();
      for (uint32_t t = 0; t < tmax; ++t)
        vals[states[t]] += cfg.critic_step_size * (rtg[t] - vals[states[t]]);
    }
  }

  double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);
  double before = clipped_surrogate(policy, tokens, cfg.clip_epsilon, inv_batch);

  // Ascent on the clipped surrogate. A token contributes gradient only while
  // the unclipped branch achieves the min; once the clip is strictly active
  // the branch is flat in theta.
  std::vector<double> grad(policy.logits().size(), 0.0);
  std::vector<double> row(mdp.vocab_size());
  for (const auto& tk : tokens) {
    double ratio = std::exp(policy.log_prob(tk.s, tk.a) - tk.log_mu);
    double unclipped = ratio * tk.adv;
    double clipped = std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * tk.adv;
    if (unclipped <= clipped) {
      double coeff = inv_batch * ratio * tk.adv;
      policy.fill_probs(tk.s, row);
      grad[tk.s * mdp.vocab_size() + tk.a] += coeff;
      kernels::axpy(grad.data() + tk.s * mdp.vocab_size(), -coeff, row.data(), mdp.vocab_size());
    }
  }
  check_finite_gradient(grad);

  Policy out = policy;
  kernels::axpy(out.mutable_logits().data(), cfg.step_size, grad.data(), grad.size());

  if (diag) {
    diag->mean_reward = reward_sum * inv_batch;
    diag->mean_shaped_return = shaped_sum * inv_batch;
    diag->surrogate_before = before;
    diag->surrogate_after = clipped_surrogate(out, tokens, cfg.clip_epsilon, inv_batch);
    diag->grad_inf_norm = grad_inf_norm(grad);
  }
  return out;
}

Policy train_policy(const GenerationMdp& mdp, const RewardFn& train_reward, const Policy& pre,
                    const OptimConfig& cfg, const RewardFn* eval_reward, const IterCallback& cb,
                    uint32_t diag_every) {
  if (cfg.algorithm == Algorithm::Sft)
    throw ContractViolation("train_policy: sft needs a demo set; use train_policy_sft");
  if (cfg.num_iters == 0) throw ContractViolation("train_policy: num_iters must be >= 1");
  if (diag_every == 0) diag_every = 1;
  Policy cur = pre;
  cur.set_role(PolicyRole::Rlhf);
  Rng rng(cfg.seed);
  ValueFunction critic(mdp.num_nonterminal_states());
  for (uint32_t iter = 0; iter < cfg.num_iters; ++iter) {
    double loss = 0.0;
    try {
      if (cfg.algorithm == Algorithm::Ppo) {
        PpoDiagnostics pd;
        Policy old = cur;
        cur = ppo_update(mdp, cur, old, train_reward, pre, cfg, rng, &critic, &pd);
        loss = -pd.surrogate_after;
      } else {
        PgDiagnostics pd;
        cur = pg_update(mdp, cur, train_reward, cfg, rng, &critic, &pd);
        loss = -pd.mean_reward;
      }
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("policy training diverged: ") + e.what(),
                          static_cast<long long>(iter + 1));
    }
    if (cb && ((iter + 1) % diag_every == 0 || iter + 1 == cfg.num_iters)) {
      IterStats st;
      st.iter = iter + 1;
      st.j_hat = exact_performance(mdp, cur, train_reward);
      st.j_exact = eval_reward ? exact_performance(mdp, cur, *eval_reward) : st.j_hat;
      st.kl_to_pre = kl_to_pre(mdp, cur, pre);
      st.loss = loss;
      cb(st);
    }
  }
  return cur;
}

Policy train_policy_sft(const GenerationMdp& mdp, const std::vector<Trajectory>& demos,
                        const Policy& pre, const OptimConfig& cfg, const RewardFn* train_reward,
                        const RewardFn* eval_reward, const IterCallback& cb,
                        uint32_t diag_every) {
  if (cfg.num_iters == 0) throw ContractViolation("train_policy_sft: num_iters must be >= 1");
  if (diag_every == 0) diag_every = 1;
  Policy cur = pre;
  cur.set_role(PolicyRole::Rlhf);
  for (uint32_t iter = 0; iter < cfg.num_iters; ++iter) {
    try {
      cur = sft_update(mdp, cur, demos, cfg.step_size);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string("sft training diverged: ") + e.what(),
                          static_cast<long long>(iter + 1));
    }
    if (cb && ((iter + 1) % diag_every == 0 || iter + 1 == cfg.num_iters)) {
      IterStats st;
      st.iter = iter + 1;
      double nll = 0.0;
      for (const auto& demo : demos)
        nll -= cur.log_prob_output(mdp, demo.context, demo.output);
      st.loss = nll / static_cast<double>(demos.size());
      st.j_hat = train_reward ? exact_performance(mdp, cur, *train_reward) : 0.0;
      st.j_exact = eval_reward ? exact_performance(mdp, cur, *eval_reward) : st.j_hat;
      st.kl_to_pre = kl_to_pre(mdp, cur, pre);
      cb(st);
    }
  }
  return cur;
}

}  // namespace rlhflab
