#pragma once
/**
 * @file linalg.hpp
 * @brief Small dense linear algebra used by the noise/ellipticity checks and
 *        the flow-Jacobian probe: symmetric 2x2 matrices, a cyclic Jacobi
 *        eigenvalue sweep, and log|det| via partial-pivot LU.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "msqg/geometry.hpp"

namespace msqg {

/// Symmetric 2x2 matrix.
struct SymMat2 {
    double xx{0.0}, xy{0.0}, yy{0.0};

    SymMat2& operator+=(const SymMat2& r) {
        xx += r.xx;
        xy += r.xy;
        yy += r.yy;
        return *this;
    }
    double trace() const { return xx + yy; }
    double min_eigenvalue() const {
        const double h = 0.5 * (xx + yy);
        const double d = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
        return h - d;
    }
};

inline SymMat2 outer(const Vec2& v) { return {v.x * v.x, v.x * v.y, v.y * v.y}; }

/// General 2x2 matrix (used for kernel Jacobians).
struct Mat2 {
    double a{0.0}, b{0.0}, c{0.0}, d{0.0};  // [[a, b], [c, d]]

    Mat2& operator+=(const Mat2& r) {
        a += r.a;
        b += r.b;
        c += r.c;
        d += r.d;
        return *this;
    }
    Mat2 operator*(double s) const { return {a * s, b * s, c * s, d * s}; }
    Vec2 apply(const Vec2& v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
    double trace() const { return a + d; }
};

/// Dense row-major square matrix, just enough for the 2N x 2N probes.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

private:
    std::size_t rows_{0}, cols_{0};
    std::vector<double> data_;
};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Destroys nothing; works on a copy. Adequate for the small PSD matrices
/// produced by the ellipticity check.
inline std::vector<double> symmetric_eigenvalues(DenseMatrix a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("symmetric_eigenvalues: matrix not square");
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26 * (n * n)) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
    return eig;
}

inline double min_symmetric_eigenvalue(const DenseMatrix& a) {
    const auto eig = symmetric_eigenvalues(a);
    double m = eig.front();
    for (double e : eig) m = std::min(m, e);
    return m;
}

/// log|det A| by LU with partial pivoting. Throws on (numerically) singular input.
inline double log_abs_det(DenseMatrix a) {
    const std::size_t n = a.rows();
    if (n != a.cols()) throw std::invalid_argument("log_abs_det: matrix not square");
    double logdet = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::fabs(a(i, k)) > std::fabs(a(piv, k))) piv = i;
        if (piv != k)
            for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
        const double akk = a(k, k);
        if (akk == 0.0) throw std::runtime_error("log_abs_det: singular matrix");
        logdet += std::log(std::fabs(akk));
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a(i, k) / akk;
            for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
        }
    }
    return logdet;
}

/// Weighted least-squares line fit y ~ a + b x. Returns slope, intercept and
/// the standard error of the slope under the weights-as-inverse-variances model.
struct LineFit {
    double slope{0.0};
    double intercept{0.0};
    double slope_stderr{0.0};
};

inline LineFit weighted_line_fit(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& w) {
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 2)
        throw std::invalid_argument("weighted_line_fit: need >= 2 matching points");
    double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
        swxx += w[i] * x[i] * x[i];
        swxy += w[i] * x[i] * y[i];
    }
    const double det = sw * swxx - swx * swx;
    if (det <= 0.0 || !std::isfinite(det)) throw std::runtime_error("weighted_line_fit: degenerate abscissae");
    LineFit f;
    f.slope = (sw * swxy - swx * swy) / det;
    f.intercept = (swxx * swy - swx * swxy) / det;
    f.slope_stderr = std::sqrt(sw / det);
    return f;
}

}  // namespace msqg
