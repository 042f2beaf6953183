#include "cpsdre/rom.hpp"

#include "cpsdre/errors.hpp"
#include "cpsdre/tensor_io.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

namespace cpsdre {

namespace {

// Column sign fix: the largest-magnitude entry (first one on ties) is positive.
void normalize_signs(Matrix& P) {
  for (Eigen::Index c = 0; c < P.cols(); ++c) {
    Eigen::Index arg = 0;
    P.col(c).cwiseAbs().maxCoeff(&arg);
    if (P(arg, c) < 0.0) P.col(c) *= -1.0;
  }
}

void hash_bytes(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

ReducedModel projection_basis(const CpFactors& f, std::size_t r) {
  f.validate();
  if (r < 1) throw std::invalid_argument("projection_basis: r must be at least 1");
  const Eigen::Index I = f.X.rows(), J = f.Y.rows();
  if (static_cast<Eigen::Index>(r) > std::min(I, J)) {
    throw std::invalid_argument("projection_basis: r exceeds min(I, J)");
  }
  const Matrix prod = f.X * f.alpha.asDiagonal() * f.Y.transpose();
  Eigen::JacobiSVD<Matrix> svd(prod, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  std::size_t usable = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(0) > 0.0 && s(k) / s(0) >= 1e-13) ++usable;
  }
  if (r > usable) {
    throw std::invalid_argument("projection_basis: requested r = " + std::to_string(r) +
                                " exceeds the numerical rank of X diag(alpha) Y' (usable rank " +
                                std::to_string(usable) + ")");
  }
  ReducedModel rm;
  rm.r = r;
  rm.P = svd.matrixU().leftCols(static_cast<Eigen::Index>(r));
  normalize_signs(rm.P);
  rm.singular_values = s.head(static_cast<Eigen::Index>(std::min<std::size_t>(usable, s.size())));
  rm.source.rank_estimate = f.rank();
  rm.source.factor_hash = factor_hash(f);
  return rm;
}

ReducedOperators reduce_dynamics(const ReducedModel& rm, StateMatrixFn assemble_A, const Matrix& B) {
  if (B.rows() != rm.P.rows()) {
    throw std::invalid_argument("reduce_dynamics: B must have as many rows as P");
  }
  if (!assemble_A) throw std::invalid_argument("reduce_dynamics: assemble_A is empty");
  ReducedOperators ops;
  ops.B_red = rm.P.transpose() * B;
  ops.A_red = [P = rm.P, A = std::move(assemble_A)](const Vector& w) -> Matrix {
    if (w.size() != P.cols()) throw std::invalid_argument("A_red: reduced state has wrong length");
    const Vector v = P * w;
    return P.transpose() * A(v) * P;
  };
  return ops;
}

Vector lift(const ReducedModel& rm, const Vector& w) {
  if (w.size() != rm.P.cols()) throw std::invalid_argument("lift: reduced state has wrong length");
  return rm.P * w;
}

Vector restrict_state(const ReducedModel& rm, const Vector& v) {
  if (v.size() != rm.P.rows()) throw std::invalid_argument("restrict: full state has wrong length");
  return rm.P.transpose() * v;
}

std::string factor_hash(const CpFactors& f) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Matrix* m : {&f.X, &f.Y, &f.Z}) {
    const std::int64_t dims[2] = {m->rows(), m->cols()};
    hash_bytes(h, dims, sizeof dims);
    hash_bytes(h, m->data(), static_cast<std::size_t>(m->size()) * sizeof(double));
  }
  hash_bytes(h, f.alpha.data(), static_cast<std::size_t>(f.alpha.size()) * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_reduced_model(const std::filesystem::path& base, const ReducedModel& rm) {
  nlohmann::ordered_json j;
  j["nx"] = rm.P.rows();
  j["r"] = rm.r;
  j["layout"] = "column-major little-endian float64";
  j["source"] = {{"solver", rm.source.solver},
                 {"rank_estimate", rm.source.rank_estimate},
                 {"factor_hash", rm.source.factor_hash}};
  j["singular_values"] = std::vector<double>(rm.singular_values.data(),
                                             rm.singular_values.data() + rm.singular_values.size());
  std::ofstream js(base.string() + ".json");
  if (!js) throw std::runtime_error("cannot write " + base.string() + ".json");
  js << j.dump(2) << "\n";
  std::ofstream bin(base.string() + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + base.string() + ".bin");
  write_le_doubles(bin, rm.P.data(), static_cast<std::size_t>(rm.P.size()));
}

ReducedModel read_reduced_model(const std::filesystem::path& base) {
  std::ifstream js(base.string() + ".json");
  if (!js) throw std::runtime_error("cannot open " + base.string() + ".json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(js);
  } catch (const std::exception& e) {
    throw std::runtime_error(base.string() + ".json: " + e.what());
  }
  ReducedModel rm;
  const auto nx = j.at("nx").get<Eigen::Index>();
  rm.r = j.at("r").get<std::size_t>();
  rm.source.solver = j.at("source").at("solver").get<std::string>();
  rm.source.rank_estimate = j.at("source").at("rank_estimate").get<std::size_t>();
  rm.source.factor_hash = j.at("source").at("factor_hash").get<std::string>();
  const auto sv = j.at("singular_values").get<std::vector<double>>();
  rm.singular_values = Eigen::Map<const Vector>(sv.data(), static_cast<Eigen::Index>(sv.size()));
  std::ifstream bin(base.string() + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + base.string() + ".bin");
  const auto vals = read_le_doubles(bin, static_cast<std::size_t>(nx) * rm.r);
  rm.P = Eigen::Map<const Matrix>(vals.data(), nx, static_cast<Eigen::Index>(rm.r));
  return rm;
}

}  // namespace cpsdre
