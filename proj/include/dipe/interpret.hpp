#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "dipe/matrix.hpp"
#include "dipe/model.hpp"
#include "dipe/trainer.hpp"

namespace dipe {

/// sum_i p_i ln(p_i / q_i), natural log. Terms with p_i = 0 contribute 0 and
/// q_i is floored at 1e-12. Throws ParameterError unless both inputs are
/// nonnegative, equally long and sum to 1 within 1e-9.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon distance sqrt(KL(p||o)/2 + KL(q||o)/2), o = (p + q) / 2.
/// Bounded by sqrt(ln 2).
double jsd(std::span<const double> p, std::span<const double> q);

/// C x C distances between the normalized router columns at the stored
/// temperature. Throws UnsupportedConfigError for single-expert models.
Matrix jsd_matrix(const ModelParams& params, const ModelConfig& cfg);

/// Time-domain IFM kernel irfft(ifm_weight, N), N = L + L' - 1.
std::vector<double> equivalent_kernel(const EffectiveChannelWeights& w, const ModelConfig& cfg);

/// Writes plot-ready CSV files into `dir` (created if missing) and returns
/// their paths: sfa_expert<m>.csv, sta_expert<m>.csv, ifm_expert<m>.csv per
/// expert, plus router.csv and jsd.csv when the model has a router. Throws
/// IoError if a file cannot be written.
std::vector<std::filesystem::path> export_weights(const Checkpoint& ckpt, const std::filesystem::path& dir);

/// Writes a C x C matrix as CSV with channel names in the header and first column.
void write_jsd_csv(const Matrix& distances, const std::vector<std::string>& names, const std::filesystem::path& path);

}  // namespace dipe
