#include "modir/projection.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace modir {

Projection pca_2d(const std::vector<Vec>& points) {
    if (points.size() < 3) throw ConfigError("projection needs at least 3 points");
    const std::size_t n = points.size();
    const std::size_t d = points.front().dim();
    if (d < 2) throw ConfigError("projection needs embeddings of dimension >= 2");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < n; ++i) {
        if (points[i].dim() != d) throw std::invalid_argument("pca_2d: inconsistent point dimensions");
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw NumericalError("pca_2d: eigen decomposition failed");

    Projection out;
    out.mean = Vec(d);
    for (std::size_t j = 0; j < d; ++j) out.mean[j] = mean(static_cast<Eigen::Index>(j));
    // Eigenvalues come in ascending order.
    for (int c = 0; c < 2; ++c) {
        const Eigen::Index col = static_cast<Eigen::Index>(d) - 1 - c;
        Eigen::VectorXd v = solver.eigenvectors().col(col);
        Eigen::Index arg = 0;
        for (Eigen::Index j = 1; j < v.size(); ++j) {
            if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
        }
        if (v(arg) < 0.0) v = -v;
        out.components[c] = Vec(d);
        for (std::size_t j = 0; j < d; ++j) out.components[c][j] = v(static_cast<Eigen::Index>(j));
        out.variance[c] = std::max(0.0, solver.eigenvalues()(col));
    }
    out.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * out.components[c][j];
            out.coords[i][c] = s;
        }
    }
    return out;
}

}  // namespace modir
