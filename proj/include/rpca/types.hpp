#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rpca {

/// Dense real matrix. Storage order is Eigen's default (column-major); the
/// on-disk formats in matrix_store.hpp are row-major regardless.
using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Base error for everything thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure of a numerical kernel (non-finite SVD/QR output) inside an
/// iterative method. `iteration` is the layer or iteration index at which the
/// failure was detected; -1 means initialization.
class NumericalError : public Error {
 public:
  NumericalError(int iteration, const std::string& what)
      : Error("numerical failure at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}

  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

inline double frobenius(const DenseMatrix& m) { return m.norm(); }

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
  }
}

}  // namespace rpca
