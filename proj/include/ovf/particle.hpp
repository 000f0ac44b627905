#ifndef OVF_PARTICLE_HPP
#define OVF_PARTICLE_HPP

#include "ovf/common.hpp"
#include "ovf/rng.hpp"
#include "ovf/ssm.hpp"

namespace ovf::baseline {

struct Ensemble {
  MatrixXd members;  // N x dx
  bool ridge_repaired = false;
};

Ensemble enkf_init(const model::ModelTheta& theta, int N, RngStream rng);

// Stochastic (perturbed-observation) ensemble Kalman step: propagate through
// the transition (skipped when propagate == false, i.e. the first
// observation), then gain update against sample covariances. Singular
// observation covariances are ridge-repaired and flagged.
void enkf_step(Ensemble& ens, const model::ModelTheta& theta, const VectorXd& y,
               RngStream rng, bool propagate = true);

VectorXd ensemble_mean(const Ensemble& ens);

struct ParticleSet {
  MatrixXd particles;  // N x dx
  double log_evidence = 0.0;
};

ParticleSet bpf_init(const model::ModelTheta& theta, int N, RngStream rng);

// Bootstrap step: propagate, weight by the observation density, accumulate
// the log-evidence increment, resample (multinomial by default, systematic
// behind the flag). Throws NumericalError when every weight underflows.
void bpf_step(ParticleSet& ps, const model::ModelTheta& theta, const VectorXd& y,
              RngStream rng, bool propagate = true, bool systematic = false);

VectorXd particle_mean(const ParticleSet& ps);

}  // namespace ovf::baseline

#endif  // OVF_PARTICLE_HPP
