// Fabricated reports behind the checked-in golden tables. Several values sit
// exactly on a binary-representable 5th-decimal tie to pin ties-to-even.
#pragma once

#include <vector>

#include "ptune/harness.hpp"

namespace fixture {

inline ptune::RunReport report(std::string label, std::string policy, double f1s, double maes,
                               double f1g, double maeg, double ents, double entg) {
  ptune::RunReport r;
  r.label = std::move(label);
  r.policy = std::move(policy);
  r.specific.f1 = f1s;
  r.specific.mae = maes;
  r.specific.attention_entropy = ents;
  r.general.f1 = f1g;
  r.general.mae = maeg;
  r.general.attention_entropy = entg;
  r.prng = "mt19937_64/splitmix64-v1";
  return r;
}

inline std::vector<ptune::RunReport> golden_reports() {
  return {
      report("toy-specific", "full", 0.5012345, 0.48661, 0.03125, 0.88271, 2.29899, 0.09375),
      report("surgical \"G1,G2\"", "surgical", 1.0, 0.0, 0.99999, 0.00004, 0.6931471805599453,
             12.3456789),
      report("llrd|grouped", "grouped_llrd", 0.15625, 0.71875, 0.25, 1.0 / 3.0, 1.5, 0.0),
  };
}

}  // namespace fixture
