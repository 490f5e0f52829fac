// bfa: train, quantize, attack and report on desk-scale victims.
//
// Exit status: 0 success, 1 runtime error, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bfa/attack.hpp"
#include "bfa/baselines.hpp"
#include "bfa/checkpoint.hpp"
#include "bfa/dataset.hpp"
#include "bfa/evaluation.hpp"
#include "bfa/report.hpp"
#include "bfa/sample.hpp"
#include "bfa/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct DataFlags {
  std::string images;
  std::string labels;
  std::string format = "auto";

  bfa::Dataset load(std::size_t num_classes = 0) const {
    bfa::DatasetFormat f = bfa::DatasetFormat::Idx;
    if (format == "csv" || (format == "auto" && fs::path(images).extension() == ".csv")) f = bfa::DatasetFormat::Csv;
    if (f == bfa::DatasetFormat::Idx && labels.empty()) {
      throw std::runtime_error("IDX data needs a label file as well as " + images);
    }
    return bfa::load_dataset(images, f, labels, num_classes);
  }
};

void add_data_flags(CLI::App* app, DataFlags& d, const std::string& split, bool required) {
  auto* opt = app->add_option("--" + split, d.images, split + " images (IDX image file or CSV)")->check(CLI::ExistingFile);
  if (required) opt->required();
  app->add_option("--" + split + "-labels", d.labels, split + " labels (IDX label file; unused for CSV)")
      ->check(CLI::ExistingFile);
  app->add_option("--" + split + "-format", d.format, "dataset format")
      ->check(CLI::IsMember({"auto", "idx", "csv"}))
      ->capture_default_str();
}

std::vector<std::size_t> parse_layers(const std::vector<std::size_t>& layers, const bfa::ModelGraph& model) {
  for (std::size_t l : layers) {
    if (l >= model.num_weighted()) {
      throw std::runtime_error("layer " + std::to_string(l) + " out of range; the model has " +
                               std::to_string(model.num_weighted()) + " weighted layers");
    }
  }
  return layers;
}

std::string trial_name(const std::string& prefix, std::uint64_t seed) {
  return prefix + "_seed" + std::to_string(seed) + ".csv";
}

void print_trial(const bfa::AttackTrace& t, std::uint64_t seed) {
  std::cout << t.mode << " seed=" << seed << " n_flip=" << t.n_flip() << " hamming=" << t.hamming()
            << " top1=" << bfa::format_real(t.clean.top1) << "->" << bfa::format_real(t.final_validation().top1)
            << " stop=" << bfa::to_string(t.stop) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bit-flip attack toolkit for quantized networks"};
  app.require_subcommand(1);

  // train
  DataFlags train_data, train_test;
  std::string train_out;
  bfa::TrainHyperParams hyper;
  std::size_t train_classes = 0;
  auto* train = app.add_subcommand("train", "train the desk CNN on 28x28 images and save a float checkpoint");
  add_data_flags(train, train_data, "train", true);
  add_data_flags(train, train_test, "test", false);
  train->add_option("--epochs", hyper.epochs, "training epochs")->capture_default_str();
  train->add_option("--batch", hyper.batch_size, "mini-batch size")->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--lr", hyper.learning_rate, "SGD learning rate")->capture_default_str();
  train->add_option("--momentum", hyper.momentum, "SGD momentum")->capture_default_str();
  train->add_option("--seed", hyper.seed, "seed for initialization and shuffling")->capture_default_str();
  train->add_option("--ste-bits", hyper.ste_bits, "quantization-aware training width (0 = plain float)")
      ->capture_default_str();
  train->add_option("--classes", train_classes, "class count (0 = infer from labels)")->capture_default_str();
  train->add_option("output", train_out, "output checkpoint")->required();

  // quantize
  std::string q_in, q_out;
  int q_nq = 8;
  auto* quantize = app.add_subcommand("quantize", "quantize a float checkpoint to n_q-bit two's-complement codes");
  quantize->add_option("--nq", q_nq, "bit width")->capture_default_str()->check(CLI::Range(bfa::kMinBits, bfa::kMaxBits));
  quantize->add_option("input", q_in, "float checkpoint")->required()->check(CLI::ExistingFile);
  quantize->add_option("output", q_out, "quantized checkpoint")->required();

  // attack
  DataFlags a_data;
  std::string a_ckpt, a_out = ".";
  bfa::AttackConfig a_cfg;
  std::optional<double> a_stop;
  std::optional<std::size_t> a_budget;
  std::size_t a_trials = 1;
  std::vector<std::size_t> a_layers;
  auto* attack = app.add_subcommand("attack", "progressive bit search on a quantized checkpoint");
  add_data_flags(attack, a_data, "test", true);
  attack->add_option("--seed", a_cfg.seed, "sample seed of the first trial; trial t uses seed + t")
      ->capture_default_str();
  attack->add_option("--nb", a_cfg.bits_per_iteration, "bits committed per iteration")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  attack->add_option("--sample-size", a_cfg.sample_size, "attack sample size")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  attack->add_option("--stop-acc", a_stop, "stop at this validation top-1 (default: 1/classes + 0.01)")
      ->check(CLI::Range(0.0, 1.0));
  attack->add_option("--max-iters", a_cfg.max_iterations, "iteration limit")->capture_default_str();
  attack->add_option("--budget", a_budget, "Hamming distance budget (default: none)");
  attack->add_option("--trials", a_trials, "number of trials")->capture_default_str()->check(CLI::PositiveNumber);
  attack->add_option("--layers", a_layers, "restrict the search to these weighted layers")->delimiter(',');
  attack->add_option("--out", a_out, "output directory")->capture_default_str();
  attack->add_option("checkpoint", a_ckpt, "quantized checkpoint")->required()->check(CLI::ExistingFile);

  // baseline
  DataFlags b_data;
  std::string b_ckpt, b_out = ".", b_mode = "random";
  bfa::BaselineConfig b_cfg;
  std::size_t b_sample = 128, b_nb = 1;
  auto* baseline = app.add_subcommand("baseline", "random-flip, float-exponent or layer-restricted control runs");
  add_data_flags(baseline, b_data, "test", true);
  baseline->add_option("--mode", b_mode, "random | float-exponent | layer-restricted")
      ->capture_default_str()
      ->check(CLI::IsMember({"random", "float-exponent", "layer-restricted"}));
  baseline->add_option("--budget", b_cfg.budget, "flips per trial (random, layer-restricted)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  baseline->add_option("--trials", b_cfg.trials, "number of trials")->capture_default_str()->check(CLI::PositiveNumber);
  baseline->add_option("--seed", b_cfg.seed, "seed of the first trial; trial t uses seed + t")->capture_default_str();
  baseline->add_option("--layers", b_cfg.allowed_layers, "allowed weighted layers (layer-restricted)")
      ->delimiter(',');
  baseline->add_option("--bit", b_cfg.target_bit, "binary32 bit to set (float-exponent; 30 = top exponent bit)")
      ->capture_default_str()
      ->check(CLI::Range(0, 31));
  baseline->add_option("--sample-size", b_sample, "attack sample size (layer-restricted)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  baseline->add_option("--nb", b_nb, "bits per iteration (layer-restricted)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  baseline->add_option("--out", b_out, "output directory")->capture_default_str();
  baseline->add_option("checkpoint", b_ckpt, "checkpoint (float for float-exponent, quantized otherwise)")
      ->required()
      ->check(CLI::ExistingFile);

  // report
  std::vector<std::string> r_inputs;
  std::optional<double> r_stop;
  std::string r_out;
  auto* report = app.add_subcommand("report", "recompute a summary from trace CSVs");
  report->add_option("--stop-acc", r_stop, "threshold for flips-to-threshold (default: 1/classes + 0.01)")
      ->check(CLI::Range(0.0, 1.0));
  report->add_option("--out", r_out, "write the summary here instead of stdout");
  report->add_option("traces", r_inputs, "trace CSV files or directories holding them")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*train) {
      const bfa::Dataset data = train_data.load(train_classes);
      std::optional<bfa::Dataset> test;
      if (!train_test.images.empty()) test = train_test.load(data.num_classes());
      bfa::ModelGraph model = bfa::desk_cnn(data.num_classes());
      bfa::initialize_weights(model, hyper.seed);
      const bfa::TrainResult r = bfa::train_victim(model, data, test ? &*test : nullptr, hyper,
                                                   [](std::size_t epoch, double loss) {
                                                     std::cout << "epoch " << epoch << " loss " << loss << '\n';
                                                   });
      bfa::save_checkpoint(model, train_out);
      std::cout << "train_top1=" << bfa::format_real(r.train_accuracy);
      if (test) std::cout << " test_top1=" << bfa::format_real(r.test_accuracy);
      std::cout << '\n';
    } else if (*quantize) {
      bfa::ModelGraph model = bfa::load_checkpoint(q_in);
      if (model.mode() == bfa::ParamMode::Quantized) model.to_float();
      model.quantize(q_nq);
      bfa::save_checkpoint(model, q_out);
      std::cout << "quantized " << model.num_weighted() << " layers to " << q_nq << " bits (" << model.total_bits()
                << " bits)\n";
    } else if (*attack) {
      const bfa::ModelGraph clean = bfa::load_checkpoint(a_ckpt);
      if (clean.mode() != bfa::ParamMode::Quantized) throw std::runtime_error(a_ckpt + " is not quantized");
      const bfa::Dataset test = a_data.load(clean.num_classes());
      a_cfg.stop_accuracy = a_stop.value_or(bfa::default_stop_accuracy(clean.num_classes()));
      a_cfg.hamming_budget = a_budget;
      a_cfg.allowed_layers = parse_layers(a_layers, clean);
      a_cfg.validate();
      fs::create_directories(a_out);

      bfa::Evaluator evaluator(test);
      const bfa::Validator validate = [&](const bfa::ModelGraph& m) { return evaluator.evaluate(m); };
      std::vector<bfa::TrialSummary> trials;
      const std::uint64_t base_seed = a_cfg.seed;
      for (std::size_t t = 0; t < a_trials; ++t) {
        bfa::AttackConfig cfg = a_cfg;
        cfg.seed = base_seed + t;
        bfa::ModelGraph model = clean;
        const bfa::AttackSample sample = bfa::draw_attack_sample(test, cfg.sample_size, clean, cfg.seed);
        const bfa::AttackTrace trace = bfa::run_attack(model, sample, validate, cfg);
        const std::string name = trial_name("attack", cfg.seed);
        const std::string csv = bfa::trace_csv(trace, {{"sample_size", std::to_string(cfg.sample_size)}});
        bfa::write_trace_csv(trace, fs::path(a_out) / name, {{"sample_size", std::to_string(cfg.sample_size)}});
        trials.push_back(bfa::summarize_trial(bfa::parse_trace_csv(csv), name, cfg.stop_accuracy));
        print_trial(trace, cfg.seed);
      }
      json config = {{"command", "attack"},
                     {"checkpoint", a_ckpt},
                     {"test", a_data.images},
                     {"seed", base_seed},
                     {"nb", a_cfg.bits_per_iteration},
                     {"sample_size", a_cfg.sample_size},
                     {"stop_acc", a_cfg.stop_accuracy},
                     {"max_iters", a_cfg.max_iterations},
                     {"trials", a_trials},
                     {"layers", a_cfg.allowed_layers}};
      config["budget"] = a_budget ? json(*a_budget) : json();
      bfa::write_json(bfa::summary_json(config, trials, a_cfg.stop_accuracy), fs::path(a_out) / "summary.json");
    } else if (*baseline) {
      b_cfg.mode = bfa::parse_baseline_mode(b_mode);
      b_cfg.validate();
      const bfa::ModelGraph clean = bfa::load_checkpoint(b_ckpt);
      const bool want_float = b_cfg.mode == bfa::BaselineMode::FloatExponent;
      if (want_float != (clean.mode() == bfa::ParamMode::Float)) {
        throw std::runtime_error(b_mode + " needs a " + (want_float ? "float" : "quantized") + " checkpoint; " +
                                 b_ckpt + " is " + (want_float ? "quantized" : "float"));
      }
      const bfa::Dataset test = b_data.load(clean.num_classes());
      const auto layers = parse_layers(b_cfg.allowed_layers, clean);
      const double threshold = bfa::default_stop_accuracy(clean.num_classes());
      fs::create_directories(b_out);

      bfa::Evaluator evaluator(test);
      const bfa::Validator validate = [&](const bfa::ModelGraph& m) { return evaluator.evaluate(m); };
      std::vector<bfa::TrialSummary> trials;
      for (std::size_t t = 0; t < b_cfg.trials; ++t) {
        const std::uint64_t seed = b_cfg.seed + t;
        bfa::ModelGraph model = clean;
        bfa::AttackTrace trace;
        std::map<std::string, std::string> header;
        switch (b_cfg.mode) {
          case bfa::BaselineMode::RandomQuantized:
            trace = bfa::random_quantized_flips(model, b_cfg.budget, seed, validate);
            header["sampling"] = "without-replacement";
            break;
          case bfa::BaselineMode::FloatExponent:
            trace = bfa::float_exponent_flip(model, seed, validate, b_cfg.target_bit);
            header["bit"] = std::to_string(b_cfg.target_bit);
            header["value_before"] = bfa::format_real(trace.steps.front().record.value_before);
            header["value_after"] = bfa::format_real(trace.steps.front().record.value_after);
            header["finite"] = trace.final_validation().finite ? "1" : "0";
            break;
          case bfa::BaselineMode::LayerRestricted: {
            const bfa::AttackSample sample = bfa::draw_attack_sample(test, b_sample, clean, seed);
            trace = bfa::layer_restricted_attack(model, layers, b_cfg.budget, sample, validate, b_nb, seed);
            std::string l;
            for (std::size_t x : layers) l += (l.empty() ? "" : ";") + std::to_string(x);
            header["layers"] = l;
            break;
          }
        }
        const std::string name = trial_name(bfa::to_string(b_cfg.mode), seed);
        bfa::write_trace_csv(trace, fs::path(b_out) / name, header);
        trials.push_back(bfa::summarize_trial(bfa::parse_trace_csv(bfa::trace_csv(trace, header)), name, threshold));
        print_trial(trace, seed);
      }
      json config = {{"command", "baseline"}, {"mode", b_mode},         {"checkpoint", b_ckpt},
                     {"test", b_data.images}, {"budget", b_cfg.budget}, {"trials", b_cfg.trials},
                     {"seed", b_cfg.seed},    {"layers", layers},       {"bit", b_cfg.target_bit},
                     {"sample_size", b_sample}, {"nb", b_nb}};
      bfa::write_json(bfa::summary_json(config, trials, threshold), fs::path(b_out) / "summary.json");
    } else if (*report) {
      std::vector<fs::path> files;
      for (const std::string& in : r_inputs) {
        if (fs::is_directory(in)) {
          std::vector<fs::path> found;
          for (const auto& e : fs::directory_iterator(in)) {
            if (e.path().extension() == ".csv") found.push_back(e.path());
          }
          std::sort(found.begin(), found.end());
          files.insert(files.end(), found.begin(), found.end());
        } else {
          files.emplace_back(in);
        }
      }
      if (files.empty()) throw std::runtime_error("no trace CSVs found");
      std::vector<bfa::TraceFile> traces;
      for (const fs::path& f : files) traces.push_back(bfa::read_trace_csv(f));
      double threshold = 0.0;
      if (r_stop) {
        threshold = *r_stop;
      } else {
        const auto it = traces.front().header.find("classes");
        if (it == traces.front().header.end()) throw std::runtime_error("trace lacks a class count; pass --stop-acc");
        threshold = bfa::default_stop_accuracy(std::stoul(it->second));
      }
      std::vector<bfa::TrialSummary> trials;
      for (std::size_t i = 0; i < files.size(); ++i) {
        trials.push_back(bfa::summarize_trial(traces[i], files[i].filename().string(), threshold));
      }
      const json summary = bfa::summary_json({{"command", "report"}, {"files", files.size()}}, trials, threshold);
      if (r_out.empty()) {
        std::cout << summary.dump(2) << '\n';
      } else {
        bfa::write_json(summary, r_out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
