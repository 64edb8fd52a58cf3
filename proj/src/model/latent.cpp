#include "mlvae/model/latent.hpp"

namespace mlvae {

template <typename T>
PriorNetwork<T>::PriorNetwork(nd::ParamStore<T>& store, const ModelConfig& config, std::mt19937_64& rng)
    : lo_(static_cast<T>(config.log_var_min)), hi_(static_cast<T>(config.log_var_max)) {
  hidden_ = nd::make_linear(store, "prior.hidden", config.latent_dim, config.prior_hidden, rng, config.init_scale);
  mean_ = nd::make_linear(store, "prior.mu", config.prior_hidden, config.latent_dim, rng, config.init_scale);
  log_var_ = nd::make_linear(store, "prior.logvar", config.prior_hidden, config.latent_dim, rng, config.init_scale);
}

template <typename T>
GaussianVars PriorNetwork<T>::conditional(nd::Tape<T>& tape, nd::Var z2) const {
  const auto h = tape.relu(tape.linear(z2, hidden_));
  return {tape.linear(h, mean_), tape.clamp(tape.linear(h, log_var_), lo_, hi_)};
}

template <typename T>
JointKl PriorNetwork<T>::joint_kl(nd::Tape<T>& tape, GaussianVars q1, GaussianVars q2, nd::Var z2_sample) const {
  const auto outer = kl_standard(tape, q2);
  const auto inner = kl_gaussians(tape, q1, conditional(tape, z2_sample));
  return {tape.add(inner, outer), inner, outer};
}

template class PriorNetwork<float>;
template class PriorNetwork<double>;

}  // namespace mlvae
