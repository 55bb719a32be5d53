#include "ldct/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

#include "ldct/checkpoint.hpp"
#include "ldct/dataset.hpp"
#include "ldct/evaluate.hpp"
#include "ldct/interpret.hpp"
#include "ldct/trainer.hpp"

namespace ldct::cli {
namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

std::string flag_name(const std::string& field) {
  std::string f = field;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

struct SynthArgs {
  std::filesystem::path out;
  std::size_t count = 200;
  std::size_t size = 64;
  std::uint64_t seed = 0;
};

struct TrainArgs {
  std::filesystem::path config, data, out, resume;
  std::map<std::string, std::string> overrides;  // field → JSON literal
};

struct DenoiseArgs {
  std::filesystem::path ckpt, in, out;
};

struct EvalArgs {
  std::filesystem::path ckpt, data, report, csv;
};

struct ClusterArgs {
  std::filesystem::path ckpt, in, out;
  std::size_t k = interpret::kDefaultClusters;
  std::uint64_t seed = 0;
  std::size_t max_iters = interpret::kDefaultMaxIterations;
};

int do_synth(const SynthArgs& a, std::ostream& out) {
  const auto pairs = data::synthesize(a.count, a.size, a.seed);
  data::write_pairs(a.out, pairs, a.seed);
  out << "wrote " << pairs.size() << " pairs to " << a.out.string() << '\n';
  return kExitOk;
}

int do_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  nlohmann::json j = nlohmann::json::object();
  if (!a.config.empty()) {
    try {
      j = nlohmann::json::parse(read_text(a.config));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kConfig, a.config.string() + ": not valid JSON: " + e.what());
    }
  }
  require(j.is_object(), ErrorKind::kConfig, "config: top level must be an object");
  for (const auto& [field, literal] : a.overrides) {
    nlohmann::json v;
    try {
      v = nlohmann::json::parse(literal);
    } catch (const nlohmann::json::exception&) {
      fail(ErrorKind::kConfig, "override " + flag_name(field) + ": '" + literal + "' is not a number");
    }
    j[field] = v;
    err << "override " << field << '=' << v.dump() << '\n';
  }
  const auto config = train::config_from_json(j.dump());
  const auto dataset = data::make_dataset(data::read_pairs(a.data), config.window(), config.foreground_threshold_hu);
  std::filesystem::create_directories(a.out);
  write_text(a.out / "config.json", nlohmann::json::parse(train::config_to_json(config)).dump(2) + "\n");
  train::TrainOptions options;
  options.out_dir = a.out;
  options.log = &out;
  if (!a.resume.empty()) options.resume = a.resume;
  const auto result = train::train(config, dataset, options);
  out << "trained " << result.state.step << " steps; checkpoint " << (a.out / "final.ckpt").string() << '\n';
  return kExitOk;
}

int do_denoise(const DenoiseArgs& a, std::ostream& out) {
  const auto ckpt = checkpoint::Container::load(a.ckpt);
  const auto config = train::config_from_json(ckpt.meta("config"));
  const auto model = train::load_denoiser(ckpt);
  const auto slice = imaging::load_slice(a.in);
  auto img = esau::esau_forward(imaging::hu_window_normalize(slice, config.window()), model);
  for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
  const auto hu = imaging::hu_window_denormalize(img, config.window());
  imaging::save_slice(imaging::Slice(slice.height(), slice.width(), std::vector<float>(hu.begin(), hu.end())), a.out);
  out << "wrote " << a.out.string() << '\n';
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const auto ckpt = checkpoint::Container::load(a.ckpt);
  const auto config = train::config_from_json(ckpt.meta("config"));
  const auto dataset = data::make_dataset(data::read_pairs(a.data), config.window(), config.foreground_threshold_hu);
  const auto report = metrics::evaluate(train::load_denoiser(ckpt), dataset);
  write_text(a.report, report.to_json());
  if (!a.csv.empty()) write_text(a.csv, report.to_csv());
  out << "PSNR " << report.psnr_summary.mean << " dB over " << report.size() << " slices\n";
  return kExitOk;
}

int do_cluster(const ClusterArgs& a, std::ostream& out) {
  const auto ckpt = checkpoint::Container::load(a.ckpt);
  const auto config = train::config_from_json(ckpt.meta("config"));
  const auto model = train::load_denoiser(ckpt);
  const auto img = imaging::hu_window_normalize(imaging::load_slice(a.in), config.window());
  const auto clustering = interpret::kmeans_cluster(interpret::extract_features(model, img), a.k, a.seed, a.max_iters);
  interpret::render_label_map(clustering.map, a.out);
  auto sidecar = a.out;
  sidecar.replace_extension(".json");
  write_text(sidecar, interpret::sidecar_json(clustering));
  out << "wrote " << a.out.string() << " and " << sidecar.string() << '\n';
  return kExitOk;
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kExitUsage;
    case ErrorKind::kIo: return kExitIo;
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kFormat:
    case ErrorKind::kTruncated:
    case ErrorKind::kDimension: return kExitFormat;
    case ErrorKind::kShape:
    case ErrorKind::kEmptyForeground: return kExitData;
    case ErrorKind::kNumerical: return kExitNumerical;
  }
  return kExitInternal;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-dose CT denoising: data synthesis, training, inference, evaluation, feature clustering", "ldct"};
  app.require_subcommand(1, 1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write seeded synthetic phantom pairs");
  s->add_option("--out", synth.out, "Output dataset directory")->required();
  s->add_option("--count", synth.count, "Number of pairs")->capture_default_str()->check(CLI::PositiveNumber);
  s->add_option("--size", synth.size, "Side length in pixels (multiple of 16)")->capture_default_str();
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Alternate MAC/ESAU optimization on a dataset");
  t->add_option("--config", tr.config, "JSON configuration (fields as below)");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Run directory for checkpoints and metrics.ndjson")->required();
  t->add_option("--resume", tr.resume, "Continue from this checkpoint");
  const auto defaults = nlohmann::json::parse(train::config_to_json(train::TrainConfig{}));
  std::map<std::string, std::string> override_values;
  std::vector<std::pair<std::string, CLI::Option*>> override_options;
  for (const auto& field : train::config_field_names()) {
    auto* opt = t->add_option(flag_name(field), override_values[field], "Overrides config field " + field)
                    ->default_str(defaults[field].dump());
    override_options.emplace_back(field, opt);
  }

  DenoiseArgs dn;
  auto* d = app.add_subcommand("denoise", "Denoise one slice with a trained checkpoint");
  d->add_option("--ckpt", dn.ckpt, "Checkpoint file")->required();
  d->add_option("--in", dn.in, "Input slice (.slc, HU)")->required();
  d->add_option("--out", dn.out, "Output slice (.slc, HU)")->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--report", ev.report, "JSON report path")->required();
  e->add_option("--csv", ev.csv, "Optional mean±std table");

  ClusterArgs cl;
  auto* c = app.add_subcommand("cluster", "K-means label map of denoiser features");
  c->add_option("--ckpt", cl.ckpt, "Checkpoint file")->required();
  c->add_option("--in", cl.in, "Input slice (.slc, HU)")->required();
  c->add_option("--out", cl.out, "Label-map PNG; a .json sidecar is written next to it")->required();
  c->add_option("--k", cl.k, "Cluster count (at most 16)")->capture_default_str();
  c->add_option("--seed", cl.seed, "Seeding random seed")->capture_default_str();
  c->add_option("--max-iters", cl.max_iters, "Lloyd iteration cap")->capture_default_str();

  std::vector<const char*> argv{"ldct"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& pe) {
    if (pe.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(pe, out, err);
      return kExitOk;
    }
    err << "error: code=" << kExitUsage << " kind=usage message=" << one_line(pe.what()) << '\n';
    return kExitUsage;
  }

  try {
    if (*s) return do_synth(synth, out);
    if (*t) {
      for (const auto& [field, opt] : override_options)
        if (opt->count() > 0) tr.overrides[field] = override_values[field];
      return do_train(tr, out, err);
    }
    if (*d) return do_denoise(dn, out);
    if (*e) return do_eval(ev, out);
    if (*c) return do_cluster(cl, out);
  } catch (const Error& ex) {
    const int code = exit_code(ex.kind());
    err << "error: code=" << code << " kind=" << to_string(ex.kind()) << " message=" << one_line(ex.what()) << '\n';
    return code;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: code=" << kExitIo << " kind=io message=" << one_line(ex.what()) << '\n';
    return kExitIo;
  } catch (const std::exception& ex) {
    err << "error: code=" << kExitInternal << " kind=internal message=" << one_line(ex.what()) << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace ldct::cli
