#pragma once

// Recovery errors of a decomposition against ground truth.

#include "rpca/types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <map>
#include <sstream>
#include <string>

namespace rpca {

inline double eps_L(const DenseMatrix& L_star, const DenseMatrix& L_out) {
  require_same_shape(L_star, L_out, "eps_L");
  return (L_star - L_out).norm();
}

inline double eps_S(const DenseMatrix& S_star, const DenseMatrix& S_out) {
  require_same_shape(S_star, S_out, "eps_S");
  return (S_star - S_out).norm();
}

/// ||M* - L - S||_F / ||M*||_F.
inline double eps_M(const DenseMatrix& M_star, const DenseMatrix& L_out, const DenseMatrix& S_out) {
  require_same_shape(M_star, L_out, "eps_M");
  require_same_shape(M_star, S_out, "eps_M");
  const double norm = M_star.norm();
  if (norm == 0.0) throw Error("eps_M: M* has zero norm");
  return (M_star - L_out - S_out).norm() / norm;
}

/// Fraction of the d*d entries whose zero/nonzero status differs. An entry
/// counts as zero when |x| <= tol; the default tol = 0 is exact-zero.
inline double eps_supp(const DenseMatrix& S_star, const DenseMatrix& S_out, double tol = 0.0) {
  require_same_shape(S_star, S_out, "eps_supp");
  if (S_star.rows() != S_star.cols()) throw Error("eps_supp: inputs must be square");
  const auto nz_star = S_star.array().abs() > tol;
  const auto nz_out = S_out.array().abs() > tol;
  const double mismatches = static_cast<double>((nz_star != nz_out).count());
  const double d = static_cast<double>(S_star.rows());
  return mismatches / (d * d);
}

struct MetricsReport {
  double eps_L = 0.0;
  double eps_S = 0.0;
  double eps_M = 0.0;
  double eps_supp = 0.0;
  std::map<std::string, std::string> tags;  // method, case, seed, ...

  /// Column order of csv_row(); frozen for schema version 1.
  static std::string csv_header() { return "method,case,seed,eps_L,eps_S,eps_M,eps_supp"; }

  std::string csv_row() const {
    auto tag = [&](const char* k) {
      const auto it = tags.find(k);
      return it == tags.end() ? std::string() : it->second;
    };
    std::ostringstream os;
    os.precision(17);
    os << tag("method") << ',' << tag("case") << ',' << tag("seed") << ',' << eps_L << ','
       << eps_S << ',' << eps_M << ',' << eps_supp;
    return os.str();
  }

  nlohmann::json to_json() const {
    return {{"schema", "rpca.metrics/1"}, {"eps_L", eps_L}, {"eps_S", eps_S},
            {"eps_M", eps_M},            {"eps_supp", eps_supp}, {"tags", tags}};
  }
};

inline MetricsReport evaluate(const DenseMatrix& L_star, const DenseMatrix& S_star,
                              const DenseMatrix& M_star, const DenseMatrix& L_out,
                              const DenseMatrix& S_out, double supp_tol = 0.0) {
  MetricsReport rep;
  rep.eps_L = eps_L(L_star, L_out);
  rep.eps_S = eps_S(S_star, S_out);
  rep.eps_M = eps_M(M_star, L_out, S_out);
  rep.eps_supp = eps_supp(S_star, S_out, supp_tol);
  return rep;
}

}  // namespace rpca
