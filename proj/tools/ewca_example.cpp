// Library walk-through: fit EWCA on two Gaussian blobs, compare with PCA and
// look at how the transport plan distributes mass between the classes.

#include <iostream>

#include "ewca/ewca.hpp"

int main() {
  const ewca::LabeledDataset ds = ewca::make_synthetic_clusters(30, 6, 2, 5.0, 42);

  ewca::SolverConfig config;
  config.k = 2;
  config.epsilon = 0.1 * ewca::mean_pairwise_cost(ds.data());

  const ewca::FitResult mm = ewca::fit(ds.data(), config, ewca::Algorithm::Mm);
  const ewca::FitResult bcd = ewca::fit(ds.data(), config, ewca::Algorithm::Bcd);
  const ewca::PcaResult pca = ewca::pca(ds.data(), config.k, true);

  std::cout << "MM  objective " << mm.trace.back().objective << " after " << mm.iterations
            << " iterations\n";
  std::cout << "BCD objective " << bcd.trace.back().objective << " after " << bcd.iterations
            << " iterations\n";
  std::cout << "MM vs BCD projector distance "
            << ewca::projector_distance(mm.basis, bcd.basis) << '\n';
  std::cout << "largest principal angle to PCA "
            << ewca::max_principal_angle(mm.basis, pca.basis) << " rad\n";

  const ewca::ClassMass mass = ewca::plan_class_mass(mm.plan, ds.labels());
  std::cout << "plan mass within classes " << mass.within << ", between " << mass.between
            << '\n';

  ewca::SplitSpec spec;
  spec.n_repeats = 20;
  const ewca::EvalReport report =
      ewca::evaluate_method(ds, ewca::ewca_fitter(config, ewca::Algorithm::Mm), spec);
  std::cout << "1-NN error on the projection: mean " << report.mean << " (q1 " << report.q1
            << ", q3 " << report.q3 << ")\n";
}
