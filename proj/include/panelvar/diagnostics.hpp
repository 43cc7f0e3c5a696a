#pragma once

#include <string>
#include <vector>

#include "panelvar/sampler.hpp"

namespace panelvar {

struct ParamSummary {
  std::string name;
  double mean = 0;
  double sd = 0;
  double cri_low = 0;   // 2.5% quantile
  double cri_high = 0;  // 97.5% quantile
  double rhat = 1;
  double rel_ess = 0;
};

// Rank-normalized split-chain potential scale reduction factor. Chains are
// split in half, all draws are jointly rank-normalized with the fractional
// offset (r - 3/8)/(S + 1/4), and the classic R-hat is computed on the
// normal scores. Constant input across all chains is 1 by convention.
double split_rhat(const std::vector<std::vector<double>>& chains);

// Effective sample size from split-chain autocorrelations with Geyer's
// initial monotone sequence truncation, divided by the total draw count.
// Constant draws give 0 by convention; fewer than 8 draws is an error.
double relative_ess(const std::vector<std::vector<double>>& chains);

std::vector<ParamSummary> summarize(const PosteriorDraws& draws);

void save_summary_csv(const std::vector<ParamSummary>& summaries,
                      const std::string& path);
std::vector<ParamSummary> load_summary_csv(const std::string& path);

}  // namespace panelvar
