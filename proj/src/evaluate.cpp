#include "ldct/evaluate.hpp"

#include <algorithm>

#include "ldct/checkpoint.hpp"
#include "ldct/error.hpp"
#include "ldct/trainer.hpp"

namespace ldct::metrics {
namespace {

MetricReport score(const std::vector<imaging::Image>& outputs, const data::Dataset& d) {
  return compare(outputs, d.clean, d.names);
}

}  // namespace

MetricReport evaluate(const esau::EsauNetParams& model, const data::Dataset& d) {
  require(d.size() >= 1, ErrorKind::kInvalidArgument, "evaluate: dataset is empty");
  std::vector<imaging::Image> outputs;
  for (const auto& noisy : d.noisy) {
    auto out = esau::esau_forward(noisy, model);
    for (auto& v : out.values) v = std::clamp(v, 0.0, 1.0);
    outputs.push_back(std::move(out));
  }
  return score(outputs, d);
}

MetricReport evaluate(const std::filesystem::path& checkpoint, const data::Dataset& d) {
  return evaluate(train::load_denoiser(checkpoint::Container::load(checkpoint)), d);
}

MetricReport evaluate_inputs(const data::Dataset& d) {
  require(d.size() >= 1, ErrorKind::kInvalidArgument, "evaluate: dataset is empty");
  return score(d.noisy, d);
}

}  // namespace ldct::metrics
