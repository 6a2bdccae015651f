#include "gpode/models/model.hpp"

#include "gpode/error.hpp"

namespace gpode::models {

Tensor StatePosterior::chol_diag() const {
  if (form == CovarianceForm::diagonal) return ad::softplus(raw_chol);
  return ad::block_diag(ad::tril_softplus_blocks(raw_chol, dim()), dim());
}

Tensor StatePosterior::sample(const Tensor& eps) const {
  if (eps.rows() != size() || eps.cols() != dim()) throw DimensionError("state noise must be N x D");
  if (form == CovarianceForm::diagonal) return ad::add(means, ad::mul(ad::softplus(raw_chol), eps));
  return ad::add(means, ad::block_matvec(ad::tril_softplus_blocks(raw_chol, dim()), eps));
}

Tensor StatePosterior::chol_frobenius2() const {
  if (form == CovarianceForm::diagonal) return ad::sum(ad::square(ad::softplus(raw_chol)));
  return ad::sum(ad::square(ad::tril_softplus_blocks(raw_chol, dim())));
}

StatePosterior StatePosterior::from_values(const Tensor& means, double stddev, CovarianceForm form) {
  const std::size_t n = means.rows(), d = means.cols();
  const double raw = kernel::softplus_inverse(stddev);
  StatePosterior q;
  q.means = means.shape().rank == 2 ? means : Tensor::matrix(1, d, {means.values().begin(), means.values().end()});
  q.form = form;
  if (form == CovarianceForm::diagonal) {
    q.raw_chol = Tensor::matrix(n, d, std::vector<double>(n * d, raw));
  } else {
    std::vector<double> v(n * d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) v[i * d * d + k * d + k] = raw;
    q.raw_chol = Tensor::matrix(n, d * d, std::move(v));
  }
  return q;
}

NoiseModel NoiseModel::from_values(double obs_variance, double shooting_variance) {
  return {Tensor::scalar(kernel::softplus_inverse(obs_variance)), shooting_variance};
}

std::vector<Tensor*> Model::params() {
  return {&inducing.z,       &inducing.whitened_mean, &inducing.raw_whitened_chol, &hyper.raw_lengthscales,
          &hyper.raw_signal_variance, &states.means, &states.raw_chol, &noise.raw_obs_variance};
}

std::vector<const Tensor*> Model::params() const {
  auto ps = const_cast<Model*>(this)->params();
  return {ps.begin(), ps.end()};
}

const std::vector<std::string>& Model::param_names() {
  static const std::vector<std::string> names{"inducing_locations", "whitened_mean", "whitened_chol",
                                              "lengthscales",       "signal_variance", "state_means",
                                              "state_chol",         "obs_variance"};
  return names;
}

}  // namespace gpode::models
