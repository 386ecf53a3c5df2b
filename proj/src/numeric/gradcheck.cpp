#include "gtee/numeric/gradcheck.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "gtee/error.hpp"

namespace gtee::num {

namespace {

template <typename Central>
double ridders(const Central& central, double h) {
    constexpr int kTab = 10;
    constexpr double kShrink = 1.4;
    constexpr double kShrink2 = kShrink * kShrink;
    constexpr double kSafe = 2.0;
    std::array<std::array<double, kTab>, kTab> a{};
    a[0][0] = central(h);
    double err = std::numeric_limits<double>::max();
    double best = a[0][0];
    for (int i = 1; i < kTab; ++i) {
        h /= kShrink;
        a[0][i] = central(h);
        double fac = kShrink2;
        for (int j = 1; j <= i; ++j) {
            a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1.0);
            fac *= kShrink2;
            const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
            if (e <= err) {
                err = e;
                best = a[j][i];
            }
        }
        if (std::abs(a[i][i] - a[i - 1][i - 1]) >= kSafe * err) break;
    }
    return best;
}

}  // namespace

GradCheckResult finite_difference_check(const std::function<Tensor()>& f, Tensor x, double eps,
                                        std::size_t max_coords, std::size_t offset, double zero_tol, FdMethod method) {
    if (!(eps > 0.0)) throw ContractError("finite_difference_check: eps must be positive");
    if (!x.is_leaf()) throw ContractError("finite_difference_check: x must be a leaf tensor");
    const bool had = x.requires_grad();
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor out = f();
    out.backward();
    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
    x.zero_grad();
    x.set_requires_grad(had);

    const std::size_t n = x.numel();
    std::size_t stride = 1;
    if (max_coords != 0 && max_coords < n) stride = n / max_coords;

    GradCheckResult res;
    NoGradGuard no_grad;
    auto values = x.mutable_data();
    for (std::size_t k = offset % stride; k < n; k += stride) {
        const double orig = values[k];
        auto central = [&](double h) {
            values[k] = orig + h;
            const double fp = f().item();
            values[k] = orig - h;
            const double fm = f().item();
            return (fp - fm) / (2.0 * h);
        };
        const double numeric = method == FdMethod::Ridders ? ridders(central, eps) : central(eps);
        values[k] = orig;
        const bool both_zero = std::abs(analytic[k]) < zero_tol && std::abs(numeric) < zero_tol;
        const double err = both_zero ? 0.0 : std::abs(analytic[k] - numeric) / (std::abs(analytic[k]) + 1e-12);
        ++res.checked;
        if (res.checked == 1 || err > res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_index = k;
            res.worst_analytic = analytic[k];
            res.worst_numeric = numeric;
        }
    }
    return res;
}

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    return finite_difference_check([&] { return f(x); }, x, eps).max_rel_error;
}

}  // namespace gtee::num
