#include "gbcc/adam.hpp"

#include <cmath>

#include "gbcc/errors.hpp"
#include "gbcc/kernels.hpp"

namespace gbcc::optim {

void Adam::step(const std::vector<diff::NodePtr>& params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Matrix::zeros(p->value.rows, p->value.cols));
      v_.push_back(Matrix::zeros(p->value.rows, p->value.cols));
    }
  }
  if (m_.size() != params.size())
    throw shape_error("adam: parameter list size changed between steps");
  ++step_;
  const double bc1 = 1.0 / (1.0 - std::pow(beta1, static_cast<double>(step_)));
  const double bc2 = 1.0 / (1.0 - std::pow(beta2, static_cast<double>(step_)));
  const auto& K = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    diff::Node& node = *params[i];
    if (!m_[i].same_shape(node.value))
      throw shape_error("adam: parameter " + std::to_string(i) + " changed shape, moments " +
                        m_[i].shape_str() + " vs value " + node.value.shape_str());
    Matrix& g = node.ensure_grad();
    K.adam_update(node.value.size(), node.value.data.data(), g.data.data(), m_[i].data.data(),
                  v_[i].data.data(), lr, beta1, beta2, eps, weight_decay, bc1, bc2);
  }
}

void Adam::zero_grads(const std::vector<diff::NodePtr>& params) const {
  for (const auto& p : params) p->zero_grad();
}

void Adam::restore(std::int64_t step, std::vector<Matrix> m, std::vector<Matrix> v) {
  if (m.size() != v.size()) throw shape_error("adam: moment list sizes differ");
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace gbcc::optim
