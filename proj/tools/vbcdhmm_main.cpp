// Command-line surface for the conditional-dependence HMM library: train
// class banks, evaluate them, generate synthetic data, mask observations,
// and inspect the inferred lag structure.

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "cdhmm/classifier.hpp"
#include "cdhmm/data_io.hpp"
#include "cdhmm/rng.hpp"
#include "cdhmm/trainer.hpp"

namespace {

using cdhmm::Dataset;
using cdhmm::Frame;
using cdhmm::Mat;
using cdhmm::ModelBank;
using cdhmm::Vec;
using json = nlohmann::ordered_json;

struct TrainFlags {
  std::string data_path;
  std::vector<int> states;
  std::vector<int> mixtures{1};
  int max_lag = 1;
  std::string pca_dim = "none";
  std::uint64_t seed = 0;
  int max_iters = 200;
  double tol = 1e-6;
  std::string out_path;
  bool verbose = false;
};

// Mean and population covariance of every present frame in the dataset.
void pooled_moments(const Dataset& data, Vec& mean, Mat& cov) {
  std::vector<Vec> frames;
  for (const auto& s : data)
    for (const auto& f : s.frames)
      if (f) frames.push_back(*f);
  if (frames.empty()) throw std::invalid_argument("dataset has no present frames");
  const int dim = static_cast<int>(frames[0].size());
  mean = Vec::Zero(dim);
  for (const Vec& f : frames) mean += f;
  mean /= static_cast<double>(frames.size());
  cov = Mat::Zero(dim, dim);
  for (const Vec& f : frames) {
    const Vec d = f - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(frames.size());
}

int run_train(const TrainFlags& flags) {
  Dataset data = cdhmm::load_dataset(flags.data_path);
  std::vector<std::string> labels;  // first-appearance order
  for (const auto& rec : data) {
    if (!rec.label)
      throw std::invalid_argument("sequence '" + rec.id +
                                  "' has no label; training requires labeled data");
    if (std::find(labels.begin(), labels.end(), *rec.label) == labels.end())
      labels.push_back(*rec.label);
  }

  ModelBank bank;
  if (flags.pca_dim != "none") {
    size_t used = 0;
    int dim = 0;
    try {
      dim = std::stoi(flags.pca_dim, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != flags.pca_dim.size() || dim < 1)
      throw std::invalid_argument("--pca-dim expects a positive integer or 'none', got '" +
                                  flags.pca_dim + "'");
    bank.preprocessing = cdhmm::pca_fit(data, dim);
    data = cdhmm::pca_apply(*bank.preprocessing, data);
  }

  cdhmm::TrainConfig config;
  config.max_iters = flags.max_iters;
  config.rel_tol = flags.tol;
  config.validate();

  const size_t n_configs = flags.states.size() * flags.mixtures.size();
  for (size_t ci = 0; ci < labels.size(); ++ci) {
    Dataset class_data;
    for (const auto& rec : data)
      if (rec.label && *rec.label == labels[ci]) class_data.push_back(rec);
    Vec mean;
    Mat cov;
    pooled_moments(class_data, mean, cov);

    std::vector<cdhmm::TrainedModel> fits;
    fits.reserve(n_configs);
    size_t best = 0;
    size_t grid_index = 0;
    for (int n : flags.states) {
      for (int m : flags.mixtures) {
        cdhmm::TrainConfig run = config;
        run.seed = cdhmm::derive_seed(flags.seed, ci * n_configs + grid_index);
        ++grid_index;
        const cdhmm::ModelHyper hyper =
            cdhmm::default_hyper(n, m, flags.max_lag, mean, cov);
        fits.push_back(cdhmm::fit(class_data, hyper, run));
        const cdhmm::TrainedModel& fitted = fits.back();
        std::cout << "class=" << labels[ci] << " states=" << n << " mixtures=" << m
                  << " iters=" << fitted.elbo_trace.size() << " elbo="
                  << std::setprecision(10) << fitted.elbo_trace.back()
                  << (fitted.converged ? "" : " (not converged)") << "\n";
        if (flags.verbose) {
          std::cout << "  trace:";
          for (double e : fitted.elbo_trace) std::cout << " " << e;
          std::cout << "\n";
        }
        if (fitted.elbo_trace.back() > fits[best].elbo_trace.back())
          best = fits.size() - 1;
      }
    }
    std::cout << "class=" << labels[ci] << " selected states="
              << fits[best].hyper.n_states << " mixtures="
              << fits[best].hyper.n_components << "\n";
    bank.add(labels[ci], std::move(fits[best]));
  }

  cdhmm::save_bank(flags.out_path, bank);
  std::cout << "wrote " << flags.out_path << " (" << bank.classes.size()
            << " classes)\n";
  return 0;
}

struct EvaluateFlags {
  std::string bank_path;
  std::string data_path;
  bool as_json = false;
  std::string predictive = "starred";
};

int run_evaluate(const EvaluateFlags& flags) {
  const ModelBank bank = cdhmm::load_bank(flags.bank_path);
  const Dataset data = cdhmm::load_dataset(flags.data_path);
  const cdhmm::PredictiveParams mode =
      cdhmm::predictive_params_from_string(flags.predictive);
  const cdhmm::EvalReport report = cdhmm::evaluate_bank(bank, data, mode);

  if (flags.as_json) {
    json j;
    j["accuracy"] = report.accuracy;
    j["labels"] = report.labels;
    json confusion = json::array();
    json per_class = json::object();
    for (size_t i = 0; i < report.labels.size(); ++i) {
      json row = json::array();
      for (size_t k = 0; k < report.labels.size(); ++k)
        row.push_back(report.confusion(static_cast<int>(i), static_cast<int>(k)));
      confusion.push_back(std::move(row));
      const double total = report.confusion.row(static_cast<int>(i)).sum();
      per_class[report.labels[i]] =
          total > 0.0 ? report.confusion(static_cast<int>(i), static_cast<int>(i)) / total
                      : 0.0;
    }
    j["confusion"] = std::move(confusion);
    j["per_class_accuracy"] = std::move(per_class);
    json seqs = json::array();
    for (size_t s = 0; s < data.size(); ++s) {
      json entry;
      entry["id"] = data[s].id;
      entry["label"] = *data[s].label;
      entry["predicted"] = report.predicted[s];
      json scores = json::object();
      for (size_t k = 0; k < report.labels.size(); ++k)
        scores[report.labels[k]] = report.scores[s](static_cast<int>(k));
      entry["scores"] = std::move(scores);
      seqs.push_back(std::move(entry));
    }
    j["sequences"] = std::move(seqs);
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  std::cout << "accuracy: " << std::setprecision(6) << report.accuracy << " ("
            << data.size() << " sequences)\n";
  std::cout << "confusion (rows = true, columns = predicted):\n";
  std::cout << std::setw(12) << "";
  for (const auto& l : report.labels) std::cout << std::setw(12) << l;
  std::cout << "\n";
  for (size_t i = 0; i < report.labels.size(); ++i) {
    std::cout << std::setw(12) << report.labels[i];
    for (size_t k = 0; k < report.labels.size(); ++k)
      std::cout << std::setw(12)
                << static_cast<long long>(
                       report.confusion(static_cast<int>(i), static_cast<int>(k)));
    std::cout << "\n";
  }
  return 0;
}

struct SynthFlags {
  std::string spec_path;
  int frames = 0;
  int count = 0;
  std::uint64_t seed = 0;
  std::string out_path;
  std::string latents_path;
};

int run_synth(const SynthFlags& flags) {
  const cdhmm::GeneratorSpec spec = cdhmm::generator_spec_from_json_file(flags.spec_path);
  const cdhmm::GeneratedData generated =
      cdhmm::generate(spec, flags.count, flags.frames, flags.seed);
  if (generated.data.empty()) {
    std::ofstream out(flags.out_path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write '" + flags.out_path + "'");
  } else {
    cdhmm::save_dataset(flags.out_path, generated.data);
  }
  if (!flags.latents_path.empty()) {
    std::ofstream out(flags.latents_path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write '" + flags.latents_path + "'");
    for (size_t s = 0; s < generated.data.size(); ++s) {
      json j;
      j["id"] = generated.data[s].id;
      json z = json::array(), x = json::array();
      for (int lag : generated.lags[s]) z.push_back(lag);
      for (int state : generated.states[s]) x.push_back(state + 1);
      j["z"] = std::move(z);
      j["x"] = std::move(x);
      out << j.dump() << "\n";
    }
  }
  std::cout << "wrote " << flags.out_path << " (" << generated.data.size()
            << " sequences of " << flags.frames << " frames)\n";
  return 0;
}

struct MaskFlags {
  std::string data_path;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string out_path;
};

int run_mask(const MaskFlags& flags) {
  const Dataset data = cdhmm::load_dataset(flags.data_path);
  cdhmm::save_dataset(flags.out_path, cdhmm::mask_missing(data, flags.fraction, flags.seed));
  std::cout << "wrote " << flags.out_path << "\n";
  return 0;
}

struct InspectFlags {
  std::string bank_path;
  std::string label;
  std::string pgm_path;
};

int run_inspect(const InspectFlags& flags) {
  const ModelBank bank = cdhmm::load_bank(flags.bank_path);
  const cdhmm::TrainedModel* model = bank.find(flags.label);
  if (!model)
    throw std::invalid_argument("bank has no class '" + flags.label + "'");
  const Mat dep = cdhmm::dependence_matrix(*model);
  std::cout << "posterior-mean lag transitions for '" << flags.label
            << "' (rows = current lag, columns = next lag):\n";
  for (int i = 0; i < dep.rows(); ++i) {
    for (int j = 0; j < dep.cols(); ++j)
      std::cout << (j ? " " : "") << std::fixed << std::setprecision(6) << dep(i, j);
    std::cout << "\n";
  }
  if (!flags.pgm_path.empty()) {
    std::ofstream out(flags.pgm_path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write '" + flags.pgm_path + "'");
    out << "P2\n" << dep.cols() << " " << dep.rows() << "\n255\n";
    for (int i = 0; i < dep.rows(); ++i) {
      for (int j = 0; j < dep.cols(); ++j)
        out << (j ? " " : "") << std::lround(255.0 * (1.0 - dep(i, j)));
      out << "\n";
    }
    std::cout << "wrote " << flags.pgm_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational conditional-dependence HMM toolkit"};
  app.require_subcommand(1);

  TrainFlags train;
  CLI::App* cmd_train = app.add_subcommand("train", "Fit one model per class label");
  cmd_train->add_option("--data", train.data_path, "training dataset (JSONL)")->required();
  cmd_train->add_option("--states", train.states, "emitting-state counts to try")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--mixtures", train.mixtures, "mixture counts to try")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--max-lag", train.max_lag, "maximum conditioning lag")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--pca-dim", train.pca_dim, "PCA dimension or 'none'");
  cmd_train->add_option("--seed", train.seed, "random seed");
  cmd_train->add_option("--max-iters", train.max_iters, "iteration cap")
      ->check(CLI::PositiveNumber);
  cmd_train->add_option("--tol", train.tol, "relative ELBO convergence tolerance");
  cmd_train->add_option("--out", train.out_path, "output bank file")->required();
  cmd_train->add_flag("--verbose", train.verbose, "print full ELBO traces");

  EvaluateFlags evaluate;
  CLI::App* cmd_evaluate = app.add_subcommand("evaluate", "Score a bank on labeled data");
  cmd_evaluate->add_option("--bank", evaluate.bank_path, "model bank file")->required();
  cmd_evaluate->add_option("--data", evaluate.data_path, "test dataset (JSONL)")->required();
  cmd_evaluate->add_flag("--json", evaluate.as_json, "machine-readable report");
  cmd_evaluate->add_option("--predictive-params", evaluate.predictive,
                           "'starred' or 'mean' parameter summary");

  SynthFlags synth;
  CLI::App* cmd_synth = app.add_subcommand("synth", "Sample sequences from a generator spec");
  cmd_synth->add_option("--spec", synth.spec_path, "generator spec (JSON)")->required();
  cmd_synth->add_option("--frames", synth.frames, "frames per sequence")
      ->required()
      ->check(CLI::PositiveNumber);
  cmd_synth->add_option("--count", synth.count, "number of sequences")
      ->required()
      ->check(CLI::NonNegativeNumber);
  cmd_synth->add_option("--seed", synth.seed, "random seed");
  cmd_synth->add_option("--out", synth.out_path, "output dataset (JSONL)")->required();
  cmd_synth->add_option("--emit-latents", synth.latents_path,
                        "also write the sampled lag/state traces");

  MaskFlags mask;
  CLI::App* cmd_mask = app.add_subcommand("mask", "Replace random frames with missing markers");
  cmd_mask->add_option("--data", mask.data_path, "input dataset (JSONL)")->required();
  cmd_mask->add_option("--fraction", mask.fraction, "fraction of frames to mask")->required();
  cmd_mask->add_option("--seed", mask.seed, "random seed");
  cmd_mask->add_option("--out", mask.out_path, "output dataset (JSONL)")->required();

  InspectFlags inspect;
  CLI::App* cmd_inspect = app.add_subcommand("inspect", "Show a model's lag dependence matrix");
  cmd_inspect->add_option("--bank", inspect.bank_path, "model bank file")->required();
  cmd_inspect->add_option("--label", inspect.label, "class to inspect")->required();
  cmd_inspect->add_option("--pgm", inspect.pgm_path, "write the matrix as a grayscale PGM");

  try {
    app.parse(argc, argv);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_evaluate->parsed()) return run_evaluate(evaluate);
    if (cmd_synth->parsed()) return run_synth(synth);
    if (cmd_mask->parsed()) return run_mask(mask);
    if (cmd_inspect->parsed()) return run_inspect(inspect);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
