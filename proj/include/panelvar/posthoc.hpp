#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "panelvar/dataset.hpp"
#include "panelvar/diagnostics.hpp"
#include "panelvar/model.hpp"
#include "panelvar/sampler.hpp"

namespace panelvar {

// Posterior of a cross-country Pearson correlation: one value per draw,
// summarized by mean and draw-level 95% quantiles.
struct CorrelationPosterior {
  std::string label;
  std::vector<double> draws;
  double mean = 0;
  double cri_low = 0;
  double cri_high = 0;
  bool significant_95() const { return cri_low > 0 || cri_high < 0; }
  bool significant_80() const;
};

// Correlation across countries of the intercept vectors of two responses,
// per posterior draw.
CorrelationPosterior intercept_correlation(const PosteriorDraws& draws,
                                           const ParameterLayout& layout,
                                           const std::string& var_a,
                                           const std::string& var_b);

// Correlation of one response's intercepts with a fixed country feature;
// countries with the feature missing are dropped pairwise.
CorrelationPosterior characteristic_correlation(
    const PosteriorDraws& draws, const ParameterLayout& layout,
    const std::string& var, const CountryCharacteristics& chars,
    const std::string& feature);

struct PcaResult {
  std::vector<std::string> features;
  Eigen::VectorXd eigenvalues;  // descending
  Eigen::MatrixXd loadings;     // feature x component, orthonormal columns
  Eigen::MatrixXd scores;       // country x component
  std::vector<std::string> countries;

  void save_loadings_csv(const std::string& path, int max_components = 5) const;
};

// PCA of the standardized feature matrix (correlation-matrix PCA). Missing
// entries are imputed at the column mean with a warning; constant columns
// are an error.
PcaResult pca(const CountryCharacteristics& chars);

struct KmeansResult {
  std::vector<int> assignments;
  Eigen::MatrixXd centers;  // k x dim
  double wcss = 0;
};

// Lloyd iterations, best of `restarts` seeded initializations. Emptied
// clusters are reseeded to the point farthest from its current center.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                    int restarts);

// Refit once per excluded country; Phi summaries per refit.
struct LocoRefit {
  std::string excluded_country;
  std::vector<ParamSummary> phi_summaries;
};
std::vector<LocoRefit> loco_sensitivity(const PanelDataset& panel,
                                        const ModelSpec& spec,
                                        const SamplerConfig& sampler_config);

void save_correlations_csv(const std::vector<CorrelationPosterior>& rows,
                           const std::string& path);

}  // namespace panelvar
