#pragma once

#include <functional>
#include <ostream>

namespace shapereg {

/// One row of a solver trace. ADMM rows leave the inner/cg/grad_norm fields
/// at zero.
struct TraceRecord {
  int iteration = 0;
  int inner_iterations = 0;
  int cg_iterations = 0;
  double grad_norm = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double complementarity = 0.0;
  double objective = 0.0;
  double sigma = 0.0;
  double elapsed = 0.0;
};

using TraceSink = std::function<void(const TraceRecord&)>;

/// Writes trace rows as CSV; the header goes out with the first row.
class CsvTraceWriter {
 public:
  explicit CsvTraceWriter(std::ostream& out) : out_(&out) {}

  void operator()(const TraceRecord& r) {
    if (!header_written_) {
      *out_ << "iter,inner,cg,grad_norm,R_P,R_D,R_C,objective,sigma,elapsed\n";
      header_written_ = true;
    }
    *out_ << r.iteration << ',' << r.inner_iterations << ',' << r.cg_iterations << ','
          << r.grad_norm << ',' << r.primal_residual << ',' << r.dual_residual << ','
          << r.complementarity << ',' << r.objective << ',' << r.sigma << ',' << r.elapsed
          << '\n';
  }

 private:
  std::ostream* out_;
  bool header_written_ = false;
};

}  // namespace shapereg
