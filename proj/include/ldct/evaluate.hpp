#pragma once

#include <filesystem>

#include "ldct/dataset.hpp"
#include "ldct/esau_net.hpp"
#include "ldct/metrics.hpp"

namespace ldct::metrics {

/// Denoises every noisy slice, clamps the output to [0, 1] and scores it
/// against the clean slice.
MetricReport evaluate(const esau::EsauNetParams& model, const data::Dataset& dataset);
MetricReport evaluate(const std::filesystem::path& checkpoint, const data::Dataset& dataset);

/// Same report for the unprocessed noisy inputs.
MetricReport evaluate_inputs(const data::Dataset& dataset);

}  // namespace ldct::metrics
