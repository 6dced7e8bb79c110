// latctl — evaluation report: loss and trajectory-cost statistics, JSON/CSV.
// SPDX-License-Identifier: MIT
#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latctl/errors.hpp"

namespace latctl::io {

struct Stat {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n−1); 0 for n ≤ 1
};

inline Stat mean_std(const std::vector<double>& xs) {
  Stat s;
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

// The evaluation table row: reconstruction and one-step-prediction losses over
// the test set, trajectory costs over the control starts, and success rate.
struct MetricsReport {
  Stat state_loss;        // per-example reconstruction cross-entropy
  Stat next_state_loss;   // per-example one-step-prediction cross-entropy
  Stat latent_traj_cost;  // per-start planned cost in latent space
  Stat real_traj_cost;    // per-start cost of the executed true trajectory
  double success_percent = 0.0;

  void validate() const {
    for (const Stat* s : {&state_loss, &next_state_loss, &latent_traj_cost, &real_traj_cost})
      if (s->stddev < 0.0) throw ValidationError("MetricsReport: negative standard deviation");
    if (success_percent < 0.0 || success_percent > 100.0)
      throw ValidationError("MetricsReport: success_percent outside [0, 100]");
  }

  nlohmann::json to_json() const {
    auto stat = [](const Stat& s) {
      return nlohmann::json{{"mean", s.mean}, {"std", s.stddev}};
    };
    return nlohmann::json{{"state_loss", stat(state_loss)},
                          {"next_state_loss", stat(next_state_loss)},
                          {"latent_traj_cost", stat(latent_traj_cost)},
                          {"real_traj_cost", stat(real_traj_cost)},
                          {"success_percent", success_percent}};
  }

  static const char* csv_header() {
    return "state_loss_mean,state_loss_std,next_state_loss_mean,next_state_loss_std,"
           "latent_traj_cost_mean,latent_traj_cost_std,real_traj_cost_mean,real_traj_cost_std,"
           "success_percent";
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);  // round-trip exact doubles; schema stability is in the header
    os << csv_header() << "\n"
       << state_loss.mean << "," << state_loss.stddev << "," << next_state_loss.mean << ","
       << next_state_loss.stddev << "," << latent_traj_cost.mean << "," << latent_traj_cost.stddev
       << "," << real_traj_cost.mean << "," << real_traj_cost.stddev << "," << success_percent
       << "\n";
    return os.str();
  }
};

}  // namespace latctl::io
