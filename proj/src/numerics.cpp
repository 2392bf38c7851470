#include "d2f/numerics.hpp"

#include <cmath>

namespace d2f::numerics {

double grad_check(const std::function<double()>& loss, std::vector<double>& params,
                  const std::vector<double>& analytic_grad, const std::vector<size_t>& indices,
                  double eps) {
    require(params.size() == analytic_grad.size(), "grad_check: size mismatch");
    double worst = 0.0;
    for (const size_t idx : indices) {
        const double saved = params[idx];
        params[idx] = saved + eps;
        const double lp = loss();
        params[idx] = saved - eps;
        const double lm = loss();
        params[idx] = saved;
        const double numeric = (lp - lm) / (2.0 * eps);
        const double analytic = analytic_grad[idx];
        // The 1e-5 floor keeps components below the finite-difference noise
        // floor (truncation ~eps^2, roundoff ~ulp(loss)/eps) from inflating
        // the ratio; a genuinely dropped term still lands orders above any
        // sane tolerance.
        const double rel =
            std::fabs(analytic - numeric) / (std::fabs(analytic) + std::fabs(numeric) + 1e-5);
        worst = rel > worst ? rel : worst;
    }
    return worst;
}

}  // namespace d2f::numerics
