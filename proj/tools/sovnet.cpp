// Command-line front end: training, evaluation, robustness matrices,
// equivariance / isomorphism / gradient verification, graph export, and
// dataset preparation.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 verification failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "sovnet/capsgraph.hpp"
#include "sovnet/data.hpp"
#include "sovnet/network.hpp"
#include "sovnet/training.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitVerification = 4;

struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

sovnet::RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  sovnet::RunConfig cfg;
  if (!path.empty()) cfg = sovnet::RunConfig::parse_file(path);
  for (const auto& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw sovnet::ConfigError("--set expects section.key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.model.validate();
  return cfg;
}

void require_writable(const std::string& path, bool overwrite) {
  if (path.empty()) return;
  if (std::filesystem::exists(path) && !overwrite)
    throw sovnet::ConfigError("refusing to overwrite existing file " + path + " (use --overwrite)");
}

// Element width recorded for the first parameter of a checkpoint.
int checkpoint_width(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw sovnet::CheckpointError("cannot open: " + path);
  char magic[5];
  if (!is.read(magic, 5)) throw sovnet::TruncatedFile("checkpoint: truncated " + path);
  std::uint64_t cfg_len = 0, count = 0;
  is.read(reinterpret_cast<char*>(&cfg_len), 8);
  is.seekg(static_cast<std::streamoff>(cfg_len), std::ios::cur);
  is.read(reinterpret_cast<char*>(&count), 8);
  std::uint32_t name_len = 0;
  is.read(reinterpret_cast<char*>(&name_len), 4);
  is.seekg(name_len, std::ios::cur);
  int width = is.get();
  if (!is) throw sovnet::TruncatedFile("checkpoint: truncated " + path);
  return width;
}

template <typename T>
sovnet::Dataset maybe_perturb(const sovnet::Dataset& ds, double translate, double degrees,
                              unsigned long long seed) {
  if (translate == 0.0 && degrees == 0.0) return ds;
  return sovnet::perturb_dataset(ds, translate, degrees, seed);
}

void print_confusion(const std::vector<std::vector<long long>>& cm) {
  std::cout << "confusion matrix (rows: true label):\n";
  for (const auto& row : cm) {
    for (auto v : row) std::cout << std::setw(7) << v;
    std::cout << "\n";
  }
}

template <typename T>
int run_train(const sovnet::RunConfig& cfg, const std::string& out, const std::string& csv,
              double translate, double degrees) {
  sovnet::SplitDatasets data = sovnet::make_datasets(cfg.data);
  sovnet::Dataset train_ds = maybe_perturb<T>(data.train, translate, degrees, cfg.data.seed + 101);
  sovnet::Dataset test_ds = maybe_perturb<T>(data.test, translate, degrees, cfg.data.seed + 202);
  sovnet::SovnetModel<T> model(cfg.model);
  model.init(cfg.training.seed);
  std::cout << "training on " << train_ds.count << " samples (" << model.parameter_count()
            << " parameters)\n";
  sovnet::TrainResult res = sovnet::train(model, train_ds, test_ds, cfg.training, &std::cout, csv);
  if (!out.empty()) {
    sovnet::save_checkpoint(model, out);
    std::cout << "saved " << out << "\n";
  }
  std::cout << "final test accuracy " << res.final_val_acc << "\n";
  return 0;
}

template <typename T>
int run_eval(const std::string& model_path, const sovnet::RunConfig& cfg, double translate,
             double degrees) {
  sovnet::SovnetModel<T> model = sovnet::load_checkpoint<T>(model_path);
  sovnet::SplitDatasets data = sovnet::make_datasets(cfg.data);
  sovnet::Dataset test_ds = maybe_perturb<T>(data.test, translate, degrees, cfg.data.seed + 202);
  std::vector<std::vector<long long>> cm;
  double acc = sovnet::evaluate(model, test_ds, &cm);
  std::cout << "accuracy " << acc << " on " << test_ds.count << " samples\n";
  print_confusion(cm);
  return 0;
}

// Table of (max translation px, max rotation deg) transformation extents.
const std::vector<std::pair<double, double>> kEvalExtents = {
    {0, 0}, {2, 30}, {2, 60}, {2, 90}, {2, 180}};

template <typename T>
int run_eval_matrix(const sovnet::RunConfig& cfg, const std::string& out, bool overwrite) {
  require_writable(out, overwrite);
  sovnet::SplitDatasets data = sovnet::make_datasets(cfg.data);
  std::vector<std::vector<double>> acc(kEvalExtents.size(),
                                       std::vector<double>(kEvalExtents.size(), 0.0));
  for (std::size_t r = 0; r < kEvalExtents.size(); ++r) {
    auto [tt, td] = kEvalExtents[r];
    sovnet::Dataset train_ds = maybe_perturb<T>(data.train, tt, td, cfg.data.seed + 101 + r);
    sovnet::SovnetModel<T> model(cfg.model);
    model.init(cfg.training.seed);
    std::cout << "training row " << r << " (translate " << tt << ", rotate " << td << ")\n";
    sovnet::train(model, train_ds, sovnet::Dataset{}, cfg.training, nullptr, "");
    for (std::size_t c = 0; c < kEvalExtents.size(); ++c) {
      auto [et, ed] = kEvalExtents[c];
      sovnet::Dataset test_ds = maybe_perturb<T>(data.test, et, ed, cfg.data.seed + 202 + c);
      acc[r][c] = sovnet::evaluate(model, test_ds);
    }
  }
  std::ostringstream table;
  table << "train\\eval";
  for (auto [t, d] : kEvalExtents) table << ",(" << t << "px " << d << "deg)";
  table << "\n";
  for (std::size_t r = 0; r < acc.size(); ++r) {
    auto [t, d] = kEvalExtents[r];
    table << "(" << t << "px " << d << "deg)";
    for (double a : acc[r]) table << "," << a;
    table << "\n";
  }
  std::cout << table.str();
  if (!out.empty()) {
    std::ofstream os(out, std::ios::trunc);
    os << table.str();
  }
  return 0;
}

template <typename T>
int run_check_equivariance(const sovnet::RunConfig& cfg, int trials, double tol,
                           unsigned long long seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const sovnet::ModelConfig& mc = cfg.model;
  const int S = sovnet::stabilizer_size(mc.group);
  const int stride = sovnet::total_stride(mc);
  const int margin = sovnet::receptive_radius(mc) + stride;

  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    sovnet::SovnetModel<T> model(mc);
    model.init(rng());
    // Random input supported away from the border so translation checks are
    // free of window clipping.
    std::vector<T> px(static_cast<std::size_t>(mc.in_channels) * mc.image_size * mc.image_size, T(0));
    for (int ch = 0; ch < mc.in_channels; ++ch)
      for (int y = margin; y < mc.image_size - margin; ++y)
        for (int x = margin; x < mc.image_size - margin; ++x)
          px[(static_cast<std::size_t>(ch) * mc.image_size + y) * mc.image_size + x] =
              static_cast<T>(unif(rng));
    sovnet::Tensor<T> image = sovnet::Tensor<T>::from_data(
        {static_cast<std::size_t>(mc.in_channels), static_cast<std::size_t>(mc.image_size),
         static_cast<std::size_t>(mc.image_size)},
        std::move(px), false);

    std::vector<sovnet::GroupElement> elems;
    for (int s = 0; s < S; ++s) elems.push_back(sovnet::stabilizer_element(mc.group, s));
    for (auto [du, dv] : {std::pair{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {1, 1}, {-1, -1}, {1, -1}, {-1, 1}})
      elems.push_back(sovnet::translation_element(mc.group, du * stride, dv * stride));

    for (const auto& g : elems) {
      auto rep = sovnet::check_equivariance(model, image, g);
      worst = std::max(worst, static_cast<double>(rep.max_field_diff));
      worst = std::max(worst, static_cast<double>(rep.score_diff));
    }
    std::cout << "model " << t << ": max deviation so far " << worst << "\n";
  }
  std::cout << "max equivariance deviation " << worst << " (tolerance " << tol << ")\n";
  if (worst > tol) throw VerificationFailure("equivariance deviation exceeds tolerance");
  return 0;
}

// Parse a stabilizer-element spec: "id", "r1".."r3", "m", "mr1".."mr3".
sovnet::GroupElement parse_transform(const std::string& spec, sovnet::GroupKind kind) {
  int mirror = 0, rot = 0;
  std::size_t i = 0;
  if (spec == "id") return sovnet::identity_element(kind);
  if (i < spec.size() && spec[i] == 'm') {
    mirror = 1;
    ++i;
  }
  if (i < spec.size() && spec[i] == 'r') {
    ++i;
    if (i >= spec.size() || spec[i] < '0' || spec[i] > '3' || i + 1 != spec.size())
      throw sovnet::ConfigError("graph: bad --transform '" + spec + "'");
    rot = spec[i] - '0';
  } else if (i != spec.size()) {
    throw sovnet::ConfigError("graph: bad --transform '" + spec + "'");
  }
  return sovnet::stabilizer_element(kind, mirror * 4 + rot);
}

template <typename T>
int run_graph(const std::string& model_path, const sovnet::RunConfig& cfg, int index,
              double threshold, const std::string& out, bool overwrite,
              const std::string& transform, double tol) {
  require_writable(out, overwrite);
  sovnet::SovnetModel<T> model = sovnet::load_checkpoint<T>(model_path);
  sovnet::SplitDatasets data = sovnet::make_datasets(cfg.data);
  if (index < 0 || index >= data.test.count)
    throw sovnet::IndexOutOfRange("graph: sample index " + std::to_string(index));
  sovnet::Tensor<T> image = data.test.image<T>(index);

  sovnet::NoGradGuard ng;
  sovnet::ForwardTrace<T> tr = model.forward(image);
  sovnet::CapsuleGraph graph = sovnet::build_graph(tr, model.cfg, threshold);
  std::cout << "graph: " << graph.vertices.size() << " vertices, " << graph.edges.size()
            << " edges\n";
  if (!out.empty()) {
    std::ofstream os(out, std::ios::trunc);
    sovnet::export_graph(graph, os);
    std::cout << "wrote " << out << "\n";
  }
  if (!transform.empty()) {
    sovnet::GroupElement h = parse_transform(transform, model.cfg.group);
    sovnet::Tensor<T> moved =
        sovnet::left_translate_plane(image, h, model.cfg.image_size, model.cfg.image_size);
    sovnet::CapsuleGraph tgraph = sovnet::build_graph(model.forward(moved), model.cfg, threshold);
    if (!out.empty()) {
      std::string tpath = out + ".transformed";
      require_writable(tpath, overwrite);
      std::ofstream os(tpath, std::ios::trunc);
      sovnet::export_graph(tgraph, os);
      std::cout << "wrote " << tpath << "\n";
    }
    sovnet::IsomorphismReport rep = sovnet::check_isomorphism(tgraph, graph, h, tol);
    std::cout << "isomorphism: " << (rep.isomorphic ? "ok" : rep.failure) << " (activation diff "
              << rep.max_activation_diff << ", weight diff " << rep.max_weight_diff << ")\n";
    if (!rep.isomorphic) throw VerificationFailure("decomposition graphs are not isomorphic");
  }
  return 0;
}

int run_gradcheck(unsigned long long seed, double h, double tol) {
  sovnet::ModelConfig mc;
  mc.image_size = 9;
  mc.stem_channels = 2;
  mc.num_types = 2;
  mc.pose_dim = 2;
  mc.hidden_layers = 2;
  mc.strides = {2, 2};
  mc.classes = 2;
  mc.decoder_hidden = {8, 8};
  sovnet::SovnetModel<double> model(mc);
  model.init(seed);

  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  // Biases start away from zero: zero biases leave some selu preactivations
  // within the finite-difference step of the kink at the origin, where the
  // central difference misreports a correct gradient.
  std::uniform_real_distribution<double> bias_init(0.05, 0.2);
  std::uniform_int_distribution<int> coin(0, 1);
  for (auto& [name, t] : model.named_parameters())
    if (t->rank() <= 1)
      for (auto& v : t->raw_values()) v = (coin(rng) ? 1.0 : -1.0) * bias_init(rng);
  std::vector<double> px(static_cast<std::size_t>(mc.image_size) * mc.image_size);
  for (auto& p : px) p = unif(rng);
  sovnet::Tensor<double> image = sovnet::Tensor<double>::from_data(
      {1, static_cast<std::size_t>(mc.image_size), static_cast<std::size_t>(mc.image_size)},
      std::move(px), false);

  sovnet::MarginSchedule::Margins m{0.9, 0.1, 0.5};
  auto make_loss = [&]() {
    sovnet::ForwardTrace<double> tr = model.forward(image);
    sovnet::Tensor<double> loss = sovnet::margin_loss(tr.scores, 0, m);
    return sovnet::add(loss, sovnet::reconstruction_loss(model.reconstruct(tr, 0), image) * 5e-4);
  };
  sovnet::GradCheckResult res = sovnet::gradcheck(model.named_parameters(), make_loss, h);
  std::cout << "gradcheck: " << res.checked << " elements, max relative error " << res.max_rel_err
            << " at " << res.worst_param << "[" << res.worst_index << "] (tolerance " << tol
            << ")\n";
  if (res.max_rel_err > tol) throw VerificationFailure("gradient check exceeds tolerance");
  return 0;
}

int run_data(const std::string& out_dir, int train_count, int test_count, int image_size,
             unsigned long long seed, bool overwrite) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  auto path = [&](const char* name) { return (fs::path(out_dir) / name).string(); };
  for (const char* f : {"train-images.idx", "train-labels.idx", "test-images.idx", "test-labels.idx"})
    require_writable(path(f), overwrite);
  sovnet::Dataset train = sovnet::synthetic_shapes(train_count, image_size, seed);
  sovnet::Dataset test = sovnet::synthetic_shapes(test_count, image_size, seed + 1);
  sovnet::save_idx(train, path("train-images.idx"), path("train-labels.idx"));
  sovnet::save_idx(test, path("test-images.idx"), path("test-labels.idx"));
  std::cout << "wrote " << train.count << " train / " << test.count << " test images to " << out_dir
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sovnet: group-equivariant capsule networks with degree-centrality routing"};
  app.require_subcommand(1);

  std::string config_path, model_path, out_path, csv_path, transform_spec;
  std::vector<std::string> overrides;
  bool overwrite = false, use_f64 = false;
  double translate = 0.0, degrees = 0.0, tol = 1e-4, threshold = 0.05, h = 1e-5;
  int trials = 5, index = 0, train_count = 2000, test_count = 500, image_size = 15;
  unsigned long long seed = 1;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file");
    cmd->add_option("--set", overrides, "override, e.g. --set training.epochs=5")->take_all();
  };

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_config(train);
  train->add_option("--out", out_path, "checkpoint to write");
  train->add_option("--log", csv_path, "per-epoch CSV log");
  train->add_option("--translate", translate, "max training-set translation (px)");
  train->add_option("--rotate", degrees, "max training-set rotation (deg)");
  train->add_flag("--overwrite", overwrite, "replace existing outputs");
  train->add_flag("--f64", use_f64, "train in binary64");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_config(eval);
  eval->add_option("--model", model_path, "checkpoint")->required();
  eval->add_option("--translate", translate, "max test-set translation (px)");
  eval->add_option("--rotate", degrees, "max test-set rotation (deg)");

  CLI::App* matrix = app.add_subcommand("eval-matrix", "train/eval robustness matrix");
  add_config(matrix);
  matrix->add_option("--out", out_path, "CSV to write");
  matrix->add_flag("--overwrite", overwrite, "replace existing outputs");

  CLI::App* equiv = app.add_subcommand("check-equivariance", "verify layerwise equivariance");
  add_config(equiv);
  equiv->add_option("--trials", trials, "number of random models");
  equiv->add_option("--tolerance", tol, "max allowed deviation");
  equiv->add_option("--seed", seed, "RNG seed");
  equiv->add_flag("--f64", use_f64, "check in binary64");

  CLI::App* graph = app.add_subcommand("graph", "export a capsule decomposition graph");
  add_config(graph);
  graph->add_option("--model", model_path, "checkpoint")->required();
  graph->add_option("--index", index, "test-set sample index");
  graph->add_option("--threshold", threshold, "activation threshold");
  graph->add_option("--out", out_path, "graph file to write");
  graph->add_option("--transform", transform_spec,
                    "also export the graph of the transformed input (id, r1..r3, m, mr1..mr3) "
                    "and check the isomorphism");
  graph->add_option("--tolerance", tol, "isomorphism value tolerance");
  graph->add_flag("--overwrite", overwrite, "replace existing outputs");

  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--seed", seed, "RNG seed");
  gc->add_option("--step", h, "finite-difference step");
  gc->add_option("--tolerance", tol, "max allowed relative error");

  CLI::App* datacmd = app.add_subcommand("data", "dataset utilities");
  datacmd->require_subcommand(1);
  CLI::App* prepare = datacmd->add_subcommand("prepare", "write a synthetic shapes dataset as IDX files");
  prepare->add_option("--out-dir", out_path, "output directory")->required();
  prepare->add_option("--train-count", train_count, "training images");
  prepare->add_option("--test-count", test_count, "test images");
  prepare->add_option("--size", image_size, "image extent");
  prepare->add_option("--seed", seed, "RNG seed");
  prepare->add_flag("--overwrite", overwrite, "replace existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train->parsed()) {
      sovnet::RunConfig cfg = load_config(config_path, overrides);
      require_writable(out_path, overwrite);
      return use_f64 ? run_train<double>(cfg, out_path, csv_path, translate, degrees)
                     : run_train<float>(cfg, out_path, csv_path, translate, degrees);
    }
    if (eval->parsed()) {
      sovnet::RunConfig cfg = load_config(config_path, overrides);
      return checkpoint_width(model_path) == 8 ? run_eval<double>(model_path, cfg, translate, degrees)
                                               : run_eval<float>(model_path, cfg, translate, degrees);
    }
    if (matrix->parsed()) {
      sovnet::RunConfig cfg = load_config(config_path, overrides);
      return run_eval_matrix<float>(cfg, out_path, overwrite);
    }
    if (equiv->parsed()) {
      sovnet::RunConfig cfg = load_config(config_path, overrides);
      return use_f64 ? run_check_equivariance<double>(cfg, trials, tol, seed)
                     : run_check_equivariance<float>(cfg, trials, tol, seed);
    }
    if (graph->parsed()) {
      sovnet::RunConfig cfg = load_config(config_path, overrides);
      return checkpoint_width(model_path) == 8
                 ? run_graph<double>(model_path, cfg, index, threshold, out_path, overwrite,
                                     transform_spec, tol)
                 : run_graph<float>(model_path, cfg, index, threshold, out_path, overwrite,
                                    transform_spec, tol);
    }
    if (gc->parsed()) return run_gradcheck(seed, h, tol);
    if (datacmd->parsed() && prepare->parsed())
      return run_data(out_path, train_count, test_count, image_size, seed, overwrite);
  } catch (const VerificationFailure& e) {
    std::cerr << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const sovnet::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const sovnet::BadMagic& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sovnet::TruncatedFile& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sovnet::CountMismatch& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sovnet::DataEmpty& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sovnet::CheckpointError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const sovnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
