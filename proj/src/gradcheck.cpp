#include "attnmix/gradcheck.hpp"

#include <cmath>

namespace attnmix {

namespace {

double rel_error(double analytic, double fd) {
    double denom = std::abs(analytic) + std::abs(fd);
    if (denom < 1e-8) denom = 1e-8;
    return std::abs(analytic - fd) / denom;
}

// Perturbs one entry in place, returning the representable +/- values.
struct Perturb {
    real plus;
    real minus;
    double actual_step;  // plus - minus in double
};

Perturb make_step(real x, double step) {
    double h = step * std::max(1.0, std::abs(static_cast<double>(x)));
    Perturb p;
    p.plus = static_cast<real>(static_cast<double>(x) + h);
    p.minus = static_cast<real>(static_cast<double>(x) - h);
    p.actual_step = static_cast<double>(p.plus) - static_cast<double>(p.minus);
    return p;
}

}  // namespace

double backprop_check(const std::function<double(const Matrix&)>& value,
                      const std::function<Matrix(const Matrix&)>& gradient,
                      const Matrix& x, double step) {
    Matrix analytic = gradient(x);
    check(analytic.same_shape(x), "backprop_check: gradient shape mismatch");
    Matrix work = x;
    double worst = 0.0;
    for (int r = 0; r < x.rows(); ++r) {
        for (int c = 0; c < x.cols(); ++c) {
            const real saved = work.at(r, c);
            const Perturb p = make_step(saved, step);
            work.at(r, c) = p.plus;
            const double f_plus = value(work);
            work.at(r, c) = p.minus;
            const double f_minus = value(work);
            work.at(r, c) = saved;
            const double fd = (f_plus - f_minus) / p.actual_step;
            worst = std::max(worst, rel_error(analytic.at(r, c), fd));
        }
    }
    return worst;
}

GradCheckReport full_gradient_check(
    const std::vector<std::pair<std::string, Var*>>& params,
    const std::function<double()>& forward_loss,
    const std::function<void()>& compute_grads, double step) {
    compute_grads();
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, var] : params) analytic.push_back(var->g);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Matrix& w = params[pi].second->v;
        const Matrix& a = analytic[pi];
        for (int r = 0; r < w.rows(); ++r) {
            for (int c = 0; c < w.cols(); ++c) {
                const real saved = w.at(r, c);
                const Perturb p = make_step(saved, step);
                w.at(r, c) = p.plus;
                const double f_plus = forward_loss();
                w.at(r, c) = p.minus;
                const double f_minus = forward_loss();
                w.at(r, c) = saved;
                const double fd = (f_plus - f_minus) / p.actual_step;
                const double err = rel_error(a.at(r, c), fd);
                if (err > report.max_rel_error) {
                    report.max_rel_error = err;
                    report.worst_param = params[pi].first;
                    report.worst_index = r * w.cols() + c;
                    report.worst_analytic = a.at(r, c);
                    report.worst_fd = fd;
                }
            }
        }
    }
    return report;
}

}  // namespace attnmix
