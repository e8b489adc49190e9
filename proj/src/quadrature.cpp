#include "agetrait/quadrature.hpp"

#include <stdexcept>

namespace agetrait {

QuadratureResult integrate(const std::function<double(double)>& f, double lower, double upper,
                           const QuadratureOptions& opts) {
  return adaptive_simpson(f, lower, upper, opts);
}

double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("trapezoid: size mismatch");
  double sum = 0.0;
  for (std::size_t k = 1; k < x.size(); ++k) sum += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
  return sum;
}

}  // namespace agetrait
