#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <functional>
#include <limits>

namespace hfl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Absolute singular-value threshold as a function of (sigma_max, rows, cols).
using TolerancePolicy = std::function<double(double sigma_max, Eigen::Index rows, Eigen::Index cols)>;

/// sigma_max * max(rows, cols) * eps * safety, the usual relative rank cutoff.
inline TolerancePolicy relative_tolerance(double safety = 1e3) {
    return [safety](double sigma_max, Eigen::Index rows, Eigen::Index cols) {
        return sigma_max * static_cast<double>(std::max(rows, cols)) * std::numeric_limits<double>::epsilon() * safety;
    };
}

/// Singular values in nonincreasing order.
inline Vector singular_values(const Matrix& m) {
    if (m.size() == 0) return Vector();
    Eigen::BDCSVD<Matrix> svd(m);
    return svd.singularValues();
}

struct NumericalRank {
    Eigen::Index rank = 0;
    double tolerance = 0.0;
    Vector singular_values;
};

inline NumericalRank numerical_rank(const Matrix& m, const TolerancePolicy& policy) {
    NumericalRank out;
    out.singular_values = singular_values(m);
    const double smax = out.singular_values.size() > 0 ? out.singular_values(0) : 0.0;
    out.tolerance = policy(smax, m.rows(), m.cols());
    for (Eigen::Index i = 0; i < out.singular_values.size(); ++i)
        if (out.singular_values(i) > out.tolerance) ++out.rank;
    return out;
}

/// Eigenvalues of (m + m^T)/2 in ascending order.
inline Vector symmetric_eigenvalues(const Matrix& m) {
    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

}  // namespace hfl
