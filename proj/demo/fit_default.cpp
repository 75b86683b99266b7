// Fits the default univariate sample with the bit-count objective and with
// plain maximum likelihood, then prints both models side by side.

#include "occam/occam.hpp"

#include <cstdlib>
#include <iostream>

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 100;
  const auto seed = static_cast<std::uint64_t>(argc > 2 ? std::atoll(argv[2]) : 1);
  const occam::Dataset data = occam::io::generate(occam::io::default_spec(1, n, seed));

  occam::FitConfig cfg;
  cfg.max_components = 4;
  cfg.seed = seed;

  for (auto objective : {occam::Objective::BitCount, occam::Objective::LikelihoodOnly}) {
    cfg.objective = objective;
    const occam::FitResult f = occam::fit(data, cfg);
    std::cout << (objective == occam::Objective::BitCount ? "bit count" : "likelihood only") << ": Q = "
              << f.q.q_total << " (q_l " << f.q.q_l << "), significant components "
              << f.significant_components(cfg.significant_amplitude) << '\n';
    const occam::Vector w = f.params.component_weights();
    for (int i = 0; i < w.size(); ++i)
      std::cout << "  weight " << w[i] << "  mean " << f.params.means(i, 0) << "  width "
                << std::exp(f.params.log_widths(i, 0)) << '\n';
  }
}
