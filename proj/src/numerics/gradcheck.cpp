#include "eevg/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace eevg {

namespace {

double evaluate(const ScalarFn& f) {
  Tape<double> tape(false);
  const double v = f(tape).value()[0];
  if (!std::isfinite(v)) {
    throw NumericError("gradient_check: non-finite function value at probe point");
  }
  return v;
}

}  // namespace

GradCheckReport gradient_check(const ScalarFn& f, std::span<Tensor<double>* const> params, double h,
                               std::size_t stride, FdScheme scheme) {
  if (!(h > 0.0)) {
    throw ConfigError("gradient_check: step must be positive");
  }
  stride = std::max<std::size_t>(stride, 1);
  for (Tensor<double>* p : params) {
    if (!p->requires_grad()) {
      throw PreconditionError("gradient_check: parameter " + shape_string(p->shape()) + " does not require grad");
    }
    p->zero_grad();
  }
  {
    Tape<double> tape;
    const Var<double> out = f(tape);
    if (!std::isfinite(out.value()[0])) {
      throw NumericError("gradient_check: non-finite function value at base point");
    }
    tape.backward(out);
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.size(); i += stride) {
      const double saved = p[i];
      auto quotient = [&](double step) {
        p[i] = saved + step;
        const double up = evaluate(f);
        p[i] = saved - step;
        const double down = evaluate(f);
        p[i] = saved;
        return (up - down) / (2.0 * step);
      };
      const double numeric =
          scheme == FdScheme::central ? quotient(h) : (4.0 * quotient(0.5 * h) - quotient(h)) / 3.0;
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.coordinates;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = k;
        report.worst_index = i;
        report.analytic = analytic[i];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace eevg
