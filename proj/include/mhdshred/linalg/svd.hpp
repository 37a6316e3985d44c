#pragma once

// Truncated SVD by Householder QR, Golub-Kahan bidiagonalization and
// implicit-shift bidiagonal QR iteration. Deterministic: no randomness, fixed
// loop order, and a fixed sign convention on the singular vectors.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "mhdshred/linalg/dense_matrix.hpp"

namespace mhdshred::linalg {

struct ReducedBasis {
    DenseMatrix U;              // Nh x r, orthonormal columns
    std::vector<double> sigma;  // r values, descending
    std::size_t rank = 0;
};

struct SvdResult {
    ReducedBasis basis;
    DenseMatrix Vt;  // r x cols
};

namespace detail {

struct Householder {
    std::vector<double> v;  // v[0] == 1
    double tau = 0.0;
    double beta = 0.0;
};

/// Reflector H = I - tau v v^T with H x = beta e_1.
inline Householder make_householder(std::span<const double> x) {
    Householder h;
    h.v.assign(x.begin(), x.end());
    if (h.v.empty()) return h;
    const double alpha = x[0];
    double tail = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) tail += x[i] * x[i];
    h.v[0] = 1.0;
    if (tail == 0.0) {
        h.beta = alpha;
        for (std::size_t i = 1; i < h.v.size(); ++i) h.v[i] = 0.0;
        return h;
    }
    const double norm = std::sqrt(alpha * alpha + tail);
    h.beta = alpha >= 0.0 ? -norm : norm;
    const double scale = 1.0 / (alpha - h.beta);
    for (std::size_t i = 1; i < h.v.size(); ++i) h.v[i] = x[i] * scale;
    h.tau = (h.beta - alpha) / h.beta;
    return h;
}

/// Rows [offset, offset + v.size()) of m, restricted to columns [col0, col1), get H applied from the left.
inline void apply_left(DenseMatrix& m, const Householder& h, std::size_t offset, std::size_t col0,
                       std::size_t col1 = std::numeric_limits<std::size_t>::max()) {
    if (h.tau == 0.0) return;
    const std::size_t nc = std::min(col1, m.cols());
    if (nc <= col0) return;
    std::vector<double> w(nc - col0, 0.0);
    for (std::size_t i = 0; i < h.v.size(); ++i) {
        const double vi = h.v[i];
        if (vi == 0.0) continue;
        auto r = m.row(offset + i);
        for (std::size_t j = col0; j < nc; ++j) w[j - col0] += vi * r[j];
    }
    for (std::size_t i = 0; i < h.v.size(); ++i) {
        const double f = h.tau * h.v[i];
        if (f == 0.0) continue;
        auto r = m.row(offset + i);
        for (std::size_t j = col0; j < nc; ++j) r[j] -= f * w[j - col0];
    }
}

inline void rotate_rows(DenseMatrix& m, std::size_t a, std::size_t b, double c, double s) {
    auto ra = m.row(a);
    auto rb = m.row(b);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        const double x = ra[j];
        const double y = rb[j];
        ra[j] = c * x + s * y;
        rb[j] = -s * x + c * y;
    }
}

struct FullSvd {
    DenseMatrix Ut;  // rows are left singular vectors
    std::vector<double> sigma;
    DenseMatrix Vt;  // rows are right singular vectors
};

/// Full SVD of a square matrix; singular vectors stored as rows.
inline FullSvd square_svd(DenseMatrix a) {
    const std::size_t n = a.rows();
    std::vector<Householder> left(n), right(n);
    std::vector<double> d(n, 0.0), e(n > 0 ? n - 1 : 0, 0.0);

    for (std::size_t k = 0; k < n; ++k) {
        std::vector<double> x(n - k);
        for (std::size_t i = k; i < n; ++i) x[i - k] = a(i, k);
        left[k] = make_householder(x);
        a(k, k) = left[k].beta;
        for (std::size_t i = k + 1; i < n; ++i) a(i, k) = 0.0;
        if (k + 1 < n) apply_left(a, left[k], k, k + 1);

        if (k + 2 < n) {
            auto rk = a.row(k);
            right[k] = make_householder(rk.subspan(k + 1));
            rk[k + 1] = right[k].beta;
            for (std::size_t j = k + 2; j < n; ++j) rk[j] = 0.0;
            const auto& h = right[k];
            if (h.tau != 0.0) {
                for (std::size_t i = k + 1; i < n; ++i) {
                    auto ri = a.row(i);
                    double dot = 0.0;
                    for (std::size_t j = 0; j < h.v.size(); ++j) dot += ri[k + 1 + j] * h.v[j];
                    dot *= h.tau;
                    for (std::size_t j = 0; j < h.v.size(); ++j) ri[k + 1 + j] -= dot * h.v[j];
                }
            }
        }
    }
    for (std::size_t k = 0; k < n; ++k) d[k] = a(k, k);
    for (std::size_t k = 0; k + 1 < n; ++k) e[k] = a(k, k + 1);

    // Ut = H_{n-1} ... H_0, Vt = G_{n-3} ... G_0
    DenseMatrix Ut = DenseMatrix::identity(n);
    DenseMatrix Vt = DenseMatrix::identity(n);
    for (std::size_t k = 0; k < n; ++k) apply_left(Ut, left[k], k, 0);
    for (std::size_t k = 0; k + 2 < n; ++k) apply_left(Vt, right[k], k + 1, 0);

    double anorm = 0.0;
    for (std::size_t k = 0; k < n; ++k)
        anorm = std::max(anorm, std::abs(d[k]) + (k + 1 < n ? std::abs(e[k]) : 0.0));
    const double eps = std::numeric_limits<double>::epsilon();
    const double small = eps * anorm;

    std::size_t iterations = 0;
    const std::size_t max_iterations = 75 * std::max<std::size_t>(n, 1) + 100;
    std::size_t q = n == 0 ? 0 : n - 1;
    while (q > 0) {
        for (std::size_t i = 0; i < q; ++i)
            if (std::abs(e[i]) <= eps * (std::abs(d[i]) + std::abs(d[i + 1])) || std::abs(e[i]) <= small * eps)
                e[i] = 0.0;
        while (q > 0 && e[q - 1] == 0.0) --q;
        if (q == 0) break;
        std::size_t p = q - 1;
        while (p > 0 && e[p - 1] != 0.0) --p;

        if (++iterations > max_iterations)
            throw NumericError("truncated_svd: bidiagonal QR iteration did not converge");

        // A zero on the diagonal splits the block after chasing out its row or column.
        bool split = false;
        for (std::size_t k = p; k < q; ++k) {
            if (std::abs(d[k]) > small) continue;
            d[k] = 0.0;
            double f = e[k];
            e[k] = 0.0;
            for (std::size_t j = k + 1; j <= q && f != 0.0; ++j) {
                const double r = std::hypot(d[j], f);
                const double c = d[j] / r;
                const double s = f / r;
                d[j] = r;
                if (j < q) {
                    f = -s * e[j];
                    e[j] = c * e[j];
                }
                rotate_rows(Ut, j, k, c, s);
            }
            split = true;
            break;
        }
        if (split) continue;
        if (std::abs(d[q]) <= small) {
            d[q] = 0.0;
            double f = e[q - 1];
            e[q - 1] = 0.0;
            for (std::size_t jj = q; jj-- > p && f != 0.0;) {
                const double r = std::hypot(d[jj], f);
                const double c = d[jj] / r;
                const double s = f / r;
                d[jj] = r;
                if (jj > p) {
                    f = -s * e[jj - 1];
                    e[jj - 1] = c * e[jj - 1];
                }
                rotate_rows(Vt, jj, q, c, s);
            }
            continue;
        }

        // Wilkinson shift from the trailing 2x2 block of B^T B.
        const double t11 = d[q - 1] * d[q - 1] + (q - 1 > p ? e[q - 2] * e[q - 2] : 0.0);
        const double t12 = d[q - 1] * e[q - 1];
        const double t22 = d[q] * d[q] + e[q - 1] * e[q - 1];
        double mu = t22;
        if (t12 != 0.0) {
            const double delta = 0.5 * (t11 - t22);
            const double denom = delta + (delta >= 0.0 ? 1.0 : -1.0) * std::hypot(delta, t12);
            mu = t22 - t12 * t12 / denom;
        }

        double y = d[p] * d[p] - mu;
        double z = d[p] * e[p];
        for (std::size_t k = p; k < q; ++k) {
            // Right rotation on columns k, k+1.
            double r = std::hypot(y, z);
            double c = r == 0.0 ? 1.0 : y / r;
            double s = r == 0.0 ? 0.0 : z / r;
            if (k > p) e[k - 1] = r;
            const double dk = d[k], ek = e[k], dk1 = d[k + 1];
            d[k] = c * dk + s * ek;
            e[k] = -s * dk + c * ek;
            double bulge = s * dk1;
            d[k + 1] = c * dk1;
            rotate_rows(Vt, k, k + 1, c, s);

            // Left rotation on rows k, k+1 removes the subdiagonal bulge.
            y = d[k];
            z = bulge;
            r = std::hypot(y, z);
            c = r == 0.0 ? 1.0 : y / r;
            s = r == 0.0 ? 0.0 : z / r;
            d[k] = r;
            const double ek2 = e[k], dk12 = d[k + 1];
            e[k] = c * ek2 + s * dk12;
            d[k + 1] = -s * ek2 + c * dk12;
            rotate_rows(Ut, k, k + 1, c, s);
            if (k + 1 < q) {
                y = e[k];
                z = s * e[k + 1];
                e[k + 1] = c * e[k + 1];
            }
        }
    }

    for (std::size_t k = 0; k < n; ++k) {
        if (d[k] < 0.0) {
            d[k] = -d[k];
            for (double& v : Vt.row(k)) v = -v;
        }
    }
    return {std::move(Ut), std::move(d), std::move(Vt)};
}

/// Householder QR in panels of columns; the trailing matrix is updated once per
/// panel with the compact WY form I - V T^T V^T. On return the upper triangle
/// of `a` holds R.
inline std::vector<Householder> blocked_qr(DenseMatrix& a, std::size_t panel = 32) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<Householder> refl(n);
    for (std::size_t k0 = 0; k0 < n; k0 += panel) {
        const std::size_t k1 = std::min(n, k0 + panel);
        const std::size_t nb = k1 - k0;
        for (std::size_t k = k0; k < k1; ++k) {
            std::vector<double> x(m - k);
            for (std::size_t i = k; i < m; ++i) x[i - k] = a(i, k);
            refl[k] = make_householder(x);
            a(k, k) = refl[k].beta;
            for (std::size_t i = k + 1; i < m; ++i) a(i, k) = 0.0;
            apply_left(a, refl[k], k, k + 1, k1);
        }
        if (k1 >= n) break;

        // V (m - k0) x nb, unit lower trapezoidal.
        const std::size_t rows = m - k0;
        DenseMatrix v(rows, nb);
        for (std::size_t j = 0; j < nb; ++j)
            for (std::size_t i = 0; i < refl[k0 + j].v.size(); ++i) v(j + i, j) = refl[k0 + j].v[i];
        // T upper triangular with H_0 ... H_{nb-1} = I - V T V^T.
        DenseMatrix t(nb, nb);
        for (std::size_t j = 0; j < nb; ++j) {
            const double tau = refl[k0 + j].tau;
            t(j, j) = tau;
            if (j == 0 || tau == 0.0) continue;
            std::vector<double> z(j, 0.0);
            for (std::size_t i = j; i < rows; ++i) {
                const double vij = v(i, j);
                if (vij == 0.0) continue;
                for (std::size_t l = 0; l < j; ++l) z[l] += v(i, l) * vij;
            }
            for (std::size_t l = 0; l < j; ++l) {
                double acc = 0.0;
                for (std::size_t q = l; q < j; ++q) acc += t(l, q) * z[q];
                t(l, j) = -tau * acc;
            }
        }
        // W = V^T A_trail, then W <- T^T W, then A_trail -= V W.
        const std::size_t nc = n - k1;
        DenseMatrix w(nb, nc);
        for (std::size_t i = 0; i < rows; ++i) {
            const auto ar = a.row(k0 + i).subspan(k1);
            for (std::size_t j = 0; j < nb; ++j) {
                const double vij = v(i, j);
                if (vij == 0.0) continue;
                auto wr = w.row(j);
                for (std::size_t c = 0; c < nc; ++c) wr[c] += vij * ar[c];
            }
        }
        DenseMatrix tw(nb, nc);
        for (std::size_t j = 0; j < nb; ++j) {
            auto out = tw.row(j);
            for (std::size_t l = 0; l <= j; ++l) {
                const double tlj = t(l, j);
                if (tlj == 0.0) continue;
                auto wr = w.row(l);
                for (std::size_t c = 0; c < nc; ++c) out[c] += tlj * wr[c];
            }
        }
        for (std::size_t i = 0; i < rows; ++i) {
            auto ar = a.row(k0 + i).subspan(k1);
            for (std::size_t j = 0; j < nb; ++j) {
                const double vij = v(i, j);
                if (vij == 0.0) continue;
                auto wr = tw.row(j);
                for (std::size_t c = 0; c < nc; ++c) ar[c] -= vij * wr[c];
            }
        }
    }
    return refl;
}

}  // namespace detail

inline SvdResult truncated_svd(const DenseMatrix& a, std::size_t r) {
    const std::size_t m0 = a.rows(), n0 = a.cols();
    if (r == 0 || r > std::min(m0, n0))
        throw DimensionError("truncated_svd: rank " + std::to_string(r) + " invalid for " + std::to_string(m0) +
                             "x" + std::to_string(n0) + " matrix");
    if (!a.all_finite()) throw DataError("truncated_svd: matrix contains non-finite entries");

    const bool transposed = m0 < n0;
    DenseMatrix work = transposed ? transpose(a) : a;
    const std::size_t m = work.rows(), n = work.cols();

    const auto qr = detail::blocked_qr(work);
    DenseMatrix rmat(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) rmat(i, j) = work(i, j);
    work = DenseMatrix();

    auto full = detail::square_svd(std::move(rmat));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return full.sigma[x] > full.sigma[y]; });

    // Left factor of the tall matrix: Q [U_R; 0], one column per retained mode.
    DenseMatrix left(m, r);
    DenseMatrix right(r, n);
    std::vector<double> sigma(r);
    for (std::size_t c = 0; c < r; ++c) {
        const std::size_t src = order[c];
        sigma[c] = full.sigma[src];
        auto ur = full.Ut.row(src);
        for (std::size_t i = 0; i < n; ++i) left(i, c) = ur[i];
        auto vr = full.Vt.row(src);
        std::copy(vr.begin(), vr.end(), right.row(c).begin());
    }
    for (std::size_t k = n; k-- > 0;) detail::apply_left(left, qr[k], k, 0);

    // Sign convention: the largest-magnitude entry of each U column is positive.
    for (std::size_t c = 0; c < r; ++c) {
        double best = 0.0;
        if (!transposed) {
            for (std::size_t i = 0; i < m; ++i)
                if (std::abs(left(i, c)) > std::abs(best)) best = left(i, c);
        } else {
            for (double v : right.row(c))
                if (std::abs(v) > std::abs(best)) best = v;
        }
        if (best < 0.0) {
            for (std::size_t i = 0; i < m; ++i) left(i, c) = -left(i, c);
            for (double& v : right.row(c)) v = -v;
        }
    }

    SvdResult out;
    out.basis.rank = r;
    out.basis.sigma = std::move(sigma);
    if (!transposed) {
        out.basis.U = std::move(left);
        out.Vt = std::move(right);
    } else {
        out.basis.U = transpose(right);
        out.Vt = transpose(left);
    }
    return out;
}

/// V = U^T X.
inline DenseMatrix project(const ReducedBasis& basis, const DenseMatrix& x) {
    if (x.rows() != basis.U.rows())
        throw DimensionError("project: X has " + std::to_string(x.rows()) + " rows, basis has " +
                             std::to_string(basis.U.rows()));
    return matmul_tn(basis.U, x);
}

/// U V.
inline DenseMatrix reconstruct(const ReducedBasis& basis, const DenseMatrix& v) {
    if (v.rows() != basis.rank || basis.U.cols() != basis.rank)
        throw DimensionError("reconstruct: coefficient rows " + std::to_string(v.rows()) + " != rank " +
                             std::to_string(basis.rank));
    return matmul(basis.U, v);
}

}  // namespace mhdshred::linalg
