#pragma once

#include <Eigen/Dense>

#include "agfuse/error.hpp"

namespace agfuse::spectral {

struct NnlsResult {
    Eigen::VectorXd x;
    double residual_norm = 0.0;  // ||Ax - b||
    int iterations = 0;
};

/// Raised when the active-set loop exceeds its iteration budget.
class NnlsError : public Error {
public:
    NnlsError(const std::string& what, Eigen::VectorXd best)
        : Error(ErrorKind::Solver, what), best_(std::move(best)) {}
    const Eigen::VectorXd& best_iterate() const { return best_; }

private:
    Eigen::VectorXd best_;
};

/// Lawson-Hanson active-set solver for min ||Ax - b|| subject to x >= 0.
///
/// Terminates once every inactive gradient component satisfies
/// g_j >= -tol * ||A^T A||_inf with g = A^T (Ax - b). The passive-set
/// subproblems are solved by column-pivoted Householder QR.
/// max_iterations <= 0 selects 3 * cols.
NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol = 1e-10,
                int max_iterations = 0);

/// KKT residual report for a candidate solution (used by tests and logs).
struct KktReport {
    double scale = 0.0;             // ||A^T A||_inf
    double max_active_grad = 0.0;   // max |g_j| over x_j > 0
    double min_inactive_grad = 0.0; // min g_j over x_j == 0 (+inf if none)
    double min_x = 0.0;

    bool satisfied(double tol) const {
        return min_x >= 0.0 && max_active_grad <= tol * scale && min_inactive_grad >= -tol * scale;
    }
};

KktReport kkt_report(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& x);

}  // namespace agfuse::spectral
