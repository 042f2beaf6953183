#include "cpsdre/cp_solvers.hpp"

#include <cstdio>
#include <ostream>

namespace cpsdre {

void SolveTrace::write_csv(std::ostream& os) const {
  os << "iter,rel_error,lambda,nnz_alpha,wall_ms\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%zu,%.3f\n", r.iter, r.rel_error, r.lambda,
                  r.nnz_alpha, r.wall_ms);
    os << buf;
  }
}

}  // namespace cpsdre
