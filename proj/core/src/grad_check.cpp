#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "osteoforge/autodiff.hpp"
#include "osteoforge/error.hpp"
#include "random.hpp"

namespace osteoforge::ad {

template <class T>
GradCheckResult grad_check(const std::function<Tensor<T>()>& loss_fn, std::vector<Tensor<T>> inputs,
                           GradCheckOptions options) {
  if (!(options.eps > 0)) throw ConfigError("eps", "must be positive");
  for (auto& x : inputs) {
    if (!x.defined() || !x.requires_grad()) throw ConfigError("inputs", "every input must require grad");
    x.zero_grad();
  }
  backward(loss_fn());

  std::vector<std::vector<T>> analytic;
  for (const auto& x : inputs) {
    const auto g = x.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(x.numel(), T(0));
  }

  auto evaluate = [&] {
    NoGradGuard guard;
    return static_cast<double>(loss_fn().item());
  };

  GradCheckResult result;
  osteoforge::detail::Engine eng(options.seed);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_input > 0 && coords.size() > options.max_coords_per_input) {
      std::shuffle(coords.begin(), coords.end(), eng);
      coords.resize(options.max_coords_per_input);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const T orig = values[i];
      values[i] = static_cast<T>(static_cast<double>(orig) + options.eps);
      const double up = evaluate();
      values[i] = static_cast<T>(static_cast<double>(orig) - options.eps);
      const double down = evaluate();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = static_cast<double>(analytic[k][i]);
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++result.coordinates_checked;
      if (err > result.max_relative_error || result.coordinates_checked == 1) {
        result.max_relative_error = std::max(result.max_relative_error, err);
        result.worst_input = k;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

template GradCheckResult grad_check<float>(const std::function<Tensor<float>()>&, std::vector<Tensor<float>>,
                                           GradCheckOptions);
template GradCheckResult grad_check<double>(const std::function<Tensor<double>()>&,
                                            std::vector<Tensor<double>>, GradCheckOptions);

}  // namespace osteoforge::ad
