#include "agfuse/spectral/nnls.hpp"

#include <limits>
#include <vector>

namespace agfuse::spectral {

namespace {

double gram_inf_norm(const Eigen::MatrixXd& A) {
    const Eigen::MatrixXd gram = A.transpose() * A;
    return gram.cwiseAbs().rowwise().sum().maxCoeff();
}

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                              const std::vector<Eigen::Index>& passive) {
    Eigen::MatrixXd sub(A.rows(), static_cast<Eigen::Index>(passive.size()));
    for (std::size_t k = 0; k < passive.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = A.col(passive[k]);
    return sub.colPivHouseholderQr().solve(b);
}

}  // namespace

NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol, int max_iterations) {
    require(A.cols() >= 1, ErrorKind::Validation, "nnls needs at least one column");
    require(A.rows() == b.size(), ErrorKind::Validation, "nnls: b length does not match rows of A");
    require(tol >= 0.0, ErrorKind::Validation, "nnls tolerance must be nonnegative");

    const Eigen::Index n = A.cols();
    const int budget = max_iterations > 0 ? max_iterations : static_cast<int>(3 * n);
    const double threshold = tol * gram_inf_norm(A);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> in_passive(static_cast<std::size_t>(n), false);
    std::vector<bool> blocked(static_cast<std::size_t>(n), false);
    Eigen::VectorXd w = A.transpose() * (b - A * x);
    int iterations = 0;

    auto passive_list = [&] {
        std::vector<Eigen::Index> p;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (in_passive[static_cast<std::size_t>(j)]) p.push_back(j);
        }
        return p;
    };

    for (;;) {
        Eigen::Index t = -1;
        double best = threshold;
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto sj = static_cast<std::size_t>(j);
            if (!in_passive[sj] && !blocked[sj] && w[j] > best) {
                best = w[j];
                t = j;
            }
        }
        if (t < 0) break;

        if (++iterations > budget) {
            throw NnlsError("nnls did not converge within " + std::to_string(budget) + " iterations", x);
        }
        in_passive[static_cast<std::size_t>(t)] = true;

        bool first = true;
        for (;;) {
            const auto passive = passive_list();
            const Eigen::VectorXd z_p = solve_passive(A, b, passive);
            Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
            for (std::size_t k = 0; k < passive.size(); ++k) z[passive[k]] = z_p[static_cast<Eigen::Index>(k)];

            // Rounding can make the entering column's coefficient nonpositive
            // even though its gradient was positive; drop it and pick another.
            if (first && z[t] <= 0.0) {
                in_passive[static_cast<std::size_t>(t)] = false;
                blocked[static_cast<std::size_t>(t)] = true;
                break;
            }
            first = false;

            bool feasible = true;
            for (Eigen::Index j : passive) feasible = feasible && z[j] > 0.0;
            if (feasible) {
                x = z;
                std::fill(blocked.begin(), blocked.end(), false);
                break;
            }

            if (++iterations > budget) {
                throw NnlsError("nnls did not converge within " + std::to_string(budget) + " iterations", x);
            }
            double alpha = std::numeric_limits<double>::infinity();
            Eigen::Index leaving = -1;
            for (Eigen::Index j : passive) {
                if (z[j] <= 0.0) {
                    const double a = x[j] / (x[j] - z[j]);
                    if (a < alpha) {
                        alpha = a;
                        leaving = j;
                    }
                }
            }
            x += alpha * (z - x);
            x[leaving] = 0.0;
            for (Eigen::Index j : passive) {
                if (x[j] <= 0.0) {
                    x[j] = 0.0;
                    in_passive[static_cast<std::size_t>(j)] = false;
                }
            }
        }
        w = A.transpose() * (b - A * x);
    }

    NnlsResult result;
    result.residual_norm = (A * x - b).norm();
    result.x = std::move(x);
    result.iterations = iterations;
    return result;
}

KktReport kkt_report(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x) {
    KktReport r;
    r.scale = gram_inf_norm(A);
    const Eigen::VectorXd g = A.transpose() * (A * x - b);
    r.min_inactive_grad = std::numeric_limits<double>::infinity();
    r.min_x = x.size() ? x.minCoeff() : 0.0;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        if (x[j] > 0.0) {
            r.max_active_grad = std::max(r.max_active_grad, std::abs(g[j]));
        } else {
            r.min_inactive_grad = std::min(r.min_inactive_grad, g[j]);
        }
    }
    return r;
}

}  // namespace agfuse::spectral
