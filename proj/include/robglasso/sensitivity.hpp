#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "robglasso/cov_plugins.hpp"
#include "robglasso/glasso.hpp"
#include "robglasso/model.hpp"

namespace robglasso {

// Finite-sample sensitivity-curve experiment: per replication, draw n - 1
// clean points, append one contamination point z, and record n times the
// change in the penalised precision estimate. Averaging over replications
// approximates the influence function at z.
struct SCExperiment {
  PluginKind kind = PluginKind::Classical;
  PenaltySpec penalty;
  int n = 1000;
  int replications = 50;
  std::vector<Eigen::VectorXd> grid;
  std::uint64_t seed = 1;
  FastMCDOptions mcd;  // consulted only when kind == FastMCD

  // dim is the model dimension the grid must match. FastMCD additionally
  // needs n > 2 * dim to leave its subset search room.
  void validate(int dim) const;
};

struct SCPoint {
  Eigen::VectorXd z;
  Eigen::MatrixXd mean_sc;     // mean over kept replications, p x p
  double frobenius_norm = 0.0; // norm of the mean matrix
  double norm_stderr = 0.0;    // Monte Carlo standard error proxy for the norm
};

struct SCSurface {
  std::vector<SCPoint> points;       // one per grid entry, grid order
  int replications_kept = 0;
  int replications_dropped = 0;
};

// Runs the experiment. One clean sample per replication is shared across the
// whole grid so every z is compared against the same baseline estimate.
// Replications whose estimator or solver fails numerically are dropped and
// counted; more than 10% dropped is a numerical error. Deterministic in
// exp.seed, independent of the worker-thread count.
SCSurface sc_surface(const GaussianModel& model, const SCExperiment& exp);

}  // namespace robglasso
