#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace agetrait {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;  // estimated absolute error
  bool converged = true;
};

struct QuadratureOptions {
  double abs_tol = 1e-10;
  std::size_t max_intervals = std::size_t{1} << 20;
  std::size_t initial_panels = 8;
};

// Adaptive Simpson on [lower, upper]. Each panel is accepted once the
// Richardson difference falls under its length-proportional share of abs_tol.
template <typename F>
QuadratureResult adaptive_simpson(F&& f, double lower, double upper,
                                  const QuadratureOptions& opts = {}) {
  QuadratureResult result;
  if (!(upper > lower)) return result;
  struct Panel {
    double a, b, fa, fm, fb, whole;
  };
  const double total_length = upper - lower;
  std::vector<Panel> stack;
  const std::size_t panels = opts.initial_panels == 0 ? 1 : opts.initial_panels;
  const double h0 = total_length / static_cast<double>(panels);
  for (std::size_t k = panels; k-- > 0;) {
    const double a = lower + h0 * static_cast<double>(k);
    const double b = (k + 1 == panels) ? upper : lower + h0 * static_cast<double>(k + 1);
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    stack.push_back({a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb)});
  }
  std::size_t intervals = panels;
  while (!stack.empty()) {
    const Panel p = stack.back();
    stack.pop_back();
    const double m = 0.5 * (p.a + p.b);
    const double lm = 0.5 * (p.a + m);
    const double rm = 0.5 * (m + p.b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - p.a) / 6.0 * (p.fa + 4.0 * flm + p.fm);
    const double right = (p.b - m) / 6.0 * (p.fm + 4.0 * frm + p.fb);
    const double diff = left + right - p.whole;
    const double local_tol = opts.abs_tol * (p.b - p.a) / total_length;
    if (std::abs(diff) <= 15.0 * local_tol || intervals >= opts.max_intervals ||
        m <= p.a || m >= p.b) {
      if (std::abs(diff) > 15.0 * local_tol) result.converged = false;
      result.value += left + right + diff / 15.0;
      result.error += std::abs(diff) / 15.0;
      continue;
    }
    ++intervals;
    stack.push_back({m, p.b, p.fm, frm, p.fb, right});
    stack.push_back({p.a, m, p.fa, flm, p.fm, left});
  }
  return result;
}

// Non-template entry point for callers holding a std::function.
QuadratureResult integrate(const std::function<double(double)>& f, double lower, double upper,
                           const QuadratureOptions& opts = {});

// Composite trapezoid over tabulated samples.
double trapezoid(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace agetrait
