#include "agentjoule/linalg.hpp"

#include <cmath>

#include "agentjoule/kernels.hpp"

namespace agentjoule::linalg {

Matrix Matrix::without_column(std::size_t skip) const {
  Matrix out(rows_, cols_ - 1);
  std::size_t dst = 0;
  for (std::size_t c = 0; c < cols_; ++c) {
    if (c == skip) continue;
    auto src = column(c);
    auto to = out.column(dst++);
    std::copy(src.begin(), src.end(), to.begin());
  }
  return out;
}

LeastSquares solve_least_squares(const Matrix& x, std::span<const double> y, double rank_tol) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  Matrix a = x;
  std::vector<double> qty(y.begin(), y.end());
  std::vector<double> tau;
  std::vector<double> diag;
  LeastSquares out;
  out.coefficients.assign(p, 0.0);

  std::size_t rank = 0;
  for (std::size_t k = 0; k < p; ++k) {
    auto col = a.column(k);
    const double full_norm = std::sqrt(kernels::dot(x.column(k), x.column(k)));
    if (rank >= n) {
      out.dependent.push_back(k);
      continue;
    }
    auto sub = col.subspan(rank);
    const double sub_norm = std::sqrt(kernels::dot(sub, sub));
    if (full_norm == 0.0 || sub_norm <= rank_tol * full_norm) {
      out.dependent.push_back(k);
      continue;
    }
    // Reflector v = sub - alpha e1 with alpha = -sign(sub0) ||sub||, stored in
    // place with v0 kept separately in tau's companion.
    const double alpha = sub[0] > 0 ? -sub_norm : sub_norm;
    sub[0] -= alpha;
    const double vnorm2 = kernels::dot(sub, sub);
    const double beta = 2.0 / vnorm2;
    for (std::size_t j = k + 1; j < p; ++j) {
      auto target = a.column(j).subspan(rank);
      kernels::axpy(-beta * kernels::dot(sub, target), sub, target);
    }
    auto ysub = std::span<double>(qty).subspan(rank);
    kernels::axpy(-beta * kernels::dot(sub, ysub), sub, ysub);
    // Row `rank` of R: alpha on the diagonal, transformed entries to the right.
    out.independent.push_back(k);
    diag.push_back(alpha);
    tau.push_back(beta);
    ++rank;
  }

  // Gather R (rank x rank) over independent columns. After reflection,
  // column j's row i (i < its own row) holds R(i, j).
  out.r_factor.assign(rank * rank, 0.0);
  for (std::size_t i = 0; i < rank; ++i) {
    out.r_factor[i * rank + i] = diag[i];
    for (std::size_t jj = i + 1; jj < rank; ++jj) {
      out.r_factor[i * rank + jj] = a(i, out.independent[jj]);
    }
  }

  std::vector<double> b(rank, 0.0);
  for (std::size_t ii = rank; ii-- > 0;) {
    double s = qty[ii];
    for (std::size_t jj = ii + 1; jj < rank; ++jj) s -= out.r_factor[ii * rank + jj] * b[jj];
    b[ii] = s / out.r_factor[ii * rank + ii];
  }
  for (std::size_t i = 0; i < rank; ++i) out.coefficients[out.independent[i]] = b[i];

  out.residuals.assign(y.begin(), y.end());
  for (std::size_t j = 0; j < p; ++j) {
    if (out.coefficients[j] != 0.0) kernels::axpy(-out.coefficients[j], x.column(j), out.residuals);
  }
  out.rss = kernels::dot(out.residuals, out.residuals);
  return out;
}

std::vector<double> inverse_gram_diagonal(const LeastSquares& fit) {
  const std::size_t r = fit.independent.size();
  // Rinv upper triangular; (R^T R)^{-1} = Rinv Rinv^T, diagonal = row norms.
  std::vector<double> rinv(r * r, 0.0);
  for (std::size_t j = 0; j < r; ++j) {
    rinv[j * r + j] = 1.0 / fit.r_factor[j * r + j];
    for (std::size_t i = j; i-- > 0;) {
      double s = 0.0;
      for (std::size_t k = i + 1; k <= j; ++k) s += fit.r_factor[i * r + k] * rinv[k * r + j];
      rinv[i * r + j] = -s / fit.r_factor[i * r + i];
    }
  }
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = i; j < r; ++j) s += rinv[i * r + j] * rinv[i * r + j];
    out[i] = s;
  }
  return out;
}

}  // namespace agentjoule::linalg
