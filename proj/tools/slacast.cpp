/*
 *  Copyright 2026 The slacast Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

// slacast: command-line driver.
//
// Every subcommand accepts --config FILE with key=value lines whose keys are
// the long option names without dashes. Flags given on the command line win
// over file values. Subcommands that produce a run directory store the fully
// resolved options there as config.txt, which can be fed back through
// --config to repeat the run.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slacast/slacast.hpp"

namespace fs = std::filesystem;
using namespace slacast;

namespace {

// ---------------------------------------------------------------------------
// option plumbing

const std::vector<std::string> kNotStored{"--help", "--config", "--out"};

std::string key_of(const CLI::Option* opt) {
  std::string name = opt->get_name(false, false);
  while (!name.empty() && name.front() == '-') name.erase(0, 1);
  return name;
}

/// Applies key=value lines to options that were not given on the command line.
void apply_config_file(CLI::App& sub, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  std::stringstream text;
  text << in.rdbuf();
  for (const auto& [key, value] : detail::parse_key_values(text.str())) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config" || key == "out") {
      throw std::runtime_error("config file " + path + ": unknown key '" + key + "'");
    }
    if (opt->count() == 0) {
      opt->add_result(value);
      opt->run_callback();
    }
  }
}

void write_resolved_config(const CLI::App& sub, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "# slacast " << sub.get_name() << '\n';
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_name(false, false);
    if (name.empty() || name.front() != '-') continue;
    if (std::find(kNotStored.begin(), kNotStored.end(), name) != kNotStored.end()) continue;
    std::string value;
    if (opt->count() > 0) {
      value = opt->results().back();
    } else if (opt->get_type_size() == 0) {
      value = "false";
    } else {
      value = opt->get_default_str();
    }
    out << key_of(opt) << '=' << value << '\n';
  }
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

fs::path make_run_dir(const std::string& out, std::uint64_t seed) {
  fs::path dir = out.empty() ? fs::path("run-" + timestamp() + "-seed" + std::to_string(seed))
                             : fs::path(out);
  fs::create_directories(dir);
  return dir;
}

YearMonth parse_year_month(const std::string& text) {
  int year = 0, month = 0;
  char dash = 0;
  std::istringstream in(text);
  if (!(in >> year >> dash >> month) || dash != '-' || month < 1 || month > 12 || !in.eof()) {
    throw std::invalid_argument("expected YYYY-MM, got '" + text + "'");
  }
  return {year, month};
}

std::size_t month_index(const GridSeries& s, const YearMonth& ym) {
  const long k = ym.months_since(s.epoch);
  if (k < 0 || static_cast<std::size_t>(k) >= s.months()) {
    throw std::out_of_range(to_string(ym) + " is outside the data (" + to_string(s.epoch) +
                            " + " + std::to_string(s.months()) + " months)");
  }
  return static_cast<std::size_t>(k);
}

/// "a/b/c" in years (the series must start in January), or "a/b/cm" in months.
std::array<MonthRange, 3> resolve_split(const GridSeries& s, const std::string& text) {
  if (!text.empty() && text.back() == 'm') {
    std::size_t a = 0, b = 0, c = 0;
    char s1 = 0, s2 = 0;
    std::istringstream in(text.substr(0, text.size() - 1));
    if (!(in >> a >> s1 >> b >> s2 >> c) || s1 != '/' || s2 != '/' || !in.eof()) {
      throw std::invalid_argument("split must look like a/b/c or a/b/cm, got '" + text + "'");
    }
    return month_ranges(s, a, b, c);
  }
  return partition_ranges(s, SplitSpec::parse(text, s.epoch.year));
}

template <class Writer>
void save_with(const fs::path& path, Writer&& write) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

// ---------------------------------------------------------------------------
// subcommands

struct SynthArgs {
  std::string kind = "mixed";
  std::size_t h = 32, w = 32, t = 120;
  std::uint64_t seed = 1;
  double noise = 0.0;
  bool land = false;
  std::string start = "1993-01";
  std::string out;
  std::string coefficients;
};

int run_synth(const SynthArgs& a) {
  SynthOptions o;
  o.kind = parse_synth_kind(a.kind);
  o.height = a.h;
  o.width = a.w;
  o.months = a.t;
  o.seed = a.seed;
  o.noise = a.noise;
  o.land = a.land;
  o.epoch = parse_year_month(a.start);
  const SyntheticSeries s = synthesize(o);
  save_slag(s.series, a.out);
  if (!a.coefficients.empty()) {
    HarmonicModel m;
    m.height = s.series.height();
    m.width = s.series.width();
    m.mask.assign(s.series.mask().begin(), s.series.mask().end());
    m.coefficients = s.coefficients;
    m.lat0 = s.series.lat0;
    m.lon0 = s.series.lon0;
    m.dlat = s.series.dlat;
    m.dlon = s.series.dlon;
    m.origin = s.series.epoch;
    save_with(a.coefficients, [&](std::ostream& out) { m.write_csv(out); });
  }
  std::cout << "wrote " << a.out << ": " << a.t << " months of " << a.h << "x" << a.w << " ("
            << a.kind << ")\n";
  return 0;
}

struct ModelArgs {
  std::string model = "cnn_convlstm";
  std::size_t lstm_units = 60, lstm_layers = 3;
  std::size_t conv_filters = 32, convlstm_units = 40;
  std::size_t window = 9;
  double dropout = 0.8;
};

ModelConfig make_config(const ModelArgs& a, const GridSeries& data) {
  ModelConfig c;
  c.kind = parse_model_kind(a.model);
  c.height = data.height();
  c.width = data.width();
  c.lstm_units = a.lstm_units;
  c.lstm_layers = a.lstm_layers;
  c.conv_filters = a.conv_filters;
  c.convlstm_units = a.convlstm_units;
  c.seq_len = a.window;
  c.dropout = a.dropout;
  c.cell_degrees = std::abs(data.dlat);
  return c;
}

struct TrainArgs {
  ModelArgs model;
  std::string data, split = "16/4/3", out;
  std::size_t epochs = 150, decay_interval = 50, bptt = 12, batch = 4, stride = 1;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool quiet = false;
};

int run_train(const TrainArgs& a, const CLI::App& sub) {
  const GridSeries data = load_slag(a.data);
  const auto ranges = resolve_split(data, a.split);
  Model model = Model::build(make_config(a.model, data), a.seed);
  const fs::path dir = make_run_dir(a.out, a.seed);
  write_resolved_config(sub, dir / "config.txt");

  optim::FitOptions f;
  f.schedule.epochs = a.epochs;
  f.schedule.base_lr = a.lr;
  f.schedule.decay_interval = a.decay_interval;
  f.window = a.bptt;
  f.batch = a.batch;
  f.stride = a.stride;
  f.seed = a.seed;
  if (!a.quiet) {
    f.on_epoch = [](const optim::EpochRecord& r) {
      std::cout << "epoch " << r.epoch << "  lr " << r.lr << "  train " << r.train_mse
                << "  val " << r.val_mse << " m^2" << std::endl;
    };
  }
  const auto history =
      optim::fit(model, data.slice_months(ranges[0].begin, ranges[0].count),
                 data.slice_months(ranges[1].begin, ranges[1].count), f);
  save_with(dir / "history.csv", [&](std::ostream& out) { history.write_csv(out); });
  save_checkpoint(model, dir / "model.slnn");
  std::cout << "trained " << a.model.model << " (" << model.parameter_count()
            << " parameters), best epoch " << history.best_epoch << "; run directory "
            << dir.string() << '\n';
  return 0;
}

struct PredictArgs {
  std::string checkpoint, data, until, out;
  std::size_t warmup = 12;
  std::uint64_t seed = 1;
};

int run_predict(const PredictArgs& a, const CLI::App& sub) {
  const Model model = load_checkpoint(a.checkpoint);
  const GridSeries data = load_slag(a.data);
  const std::size_t last =
      a.until.empty() ? data.months() - 1 : month_index(data, parse_year_month(a.until));
  const fs::path dir = make_run_dir(a.out, a.seed);
  write_resolved_config(sub, dir / "config.txt");

  Forecast fc;
  if (is_sequence_kind(model.config().kind)) {
    const std::size_t len = model.config().sequence_length();
    if (last + 1 < len) {
      throw std::invalid_argument("a sequence forecast needs " + std::to_string(len) +
                                  " true months up to the chosen month");
    }
    fc = predict_sequence(model, data.slice_months(last + 1 - len, len));
  } else {
    fc = predict_next_month(model, data.slice_months(0, last + 1), a.warmup);
  }
  save_slag(fc.fields, dir / "forecast.slag");
  render_heatmap(fc.fields, 0).save(dir / "forecast.ppm");
  std::cout << "forecast of " << fc.fields.months() << " month(s) from "
            << to_string(fc.fields.epoch) << " using true months " << to_string(fc.true_inputs.front())
            << " to " << to_string(fc.true_inputs.back()) << "; run directory " << dir.string()
            << '\n';
  return 0;
}

struct RolloutArgs {
  std::string checkpoint, data, start, out;
  std::size_t cycles = 20;
  std::uint64_t seed = 1;
};

int run_rollout(const RolloutArgs& a, const CLI::App& sub) {
  const Model model = load_checkpoint(a.checkpoint);
  if (!is_sequence_kind(model.config().kind)) {
    throw std::invalid_argument("rollout needs a seq_lstm checkpoint");
  }
  const GridSeries data = load_slag(a.data);
  const std::size_t first = a.start.empty() ? 0 : month_index(data, parse_year_month(a.start));
  const std::size_t len = model.config().sequence_length();
  if (first + len > data.months()) {
    throw std::invalid_argument("the seed window runs past the end of the data");
  }
  const fs::path dir = make_run_dir(a.out, a.seed);
  write_resolved_config(sub, dir / "config.txt");
  const Forecast fc = rollout_closed_loop(model, data.slice_months(first, len), a.cycles);
  save_slag(fc.fields, dir / "rollout.slag");
  save_with(dir / "provenance.csv", [&](std::ostream& out) {
    out << "year,month,input\n";
    for (std::size_t t = 0; t < fc.fields.months(); ++t) {
      const YearMonth ym = fc.fields.epoch.plus(static_cast<long>(t));
      out << ym.year << ',' << ym.month << ','
          << (fc.provenance[t] == Feed::truth ? "truth" : "prediction") << '\n';
    }
  });
  std::cout << fc.fields.months() << " months from " << to_string(fc.fields.epoch) << ", "
            << fc.true_inputs.size() << " true seed months (" << to_string(fc.true_inputs.front())
            << " to " << to_string(fc.true_inputs.back()) << "); run directory "
            << dir.string() << '\n';
  return 0;
}

struct BaselineArgs {
  std::string fit, split, out;
  std::uint64_t seed = 1;
};

int run_baseline(const BaselineArgs& a, const CLI::App& sub) {
  const GridSeries data = load_slag(a.fit);
  const fs::path dir = make_run_dir(a.out, a.seed);
  write_resolved_config(sub, dir / "config.txt");
  if (a.split.empty()) {
    const HarmonicModel m = fit_baseline(data);
    save_with(dir / "coefficients.csv", [&](std::ostream& out) { m.write_csv(out); });
    std::cout << "fitted " << data.ocean_cells() << " cells over " << data.months()
              << " months; run directory " << dir.string() << '\n';
    return 0;
  }
  const auto ranges = resolve_split(data, a.split);
  const HarmonicModel m = fit_baseline(data.slice_months(ranges[0].begin, ranges[0].count));
  save_with(dir / "coefficients.csv", [&](std::ostream& out) { m.write_csv(out); });
  const EvalReport report = evaluate_baseline(m, data, ranges);
  save_with(dir / "report.csv", [&](std::ostream& out) { report.write_csv(out, data.epoch); });
  report.write_csv(std::cout, data.epoch);
  std::cout << "run directory " << dir.string() << '\n';
  return 0;
}

struct EvaluateArgs {
  std::string model, checkpoint, data, split = "16/4/3", out, cell;
  std::size_t cycles = 0, warmup = 12;
  double min = -0.3, max = 0.3;
  std::uint64_t seed = 1;
};

int run_evaluate(const EvaluateArgs& a, const CLI::App& sub) {
  const GridSeries data = load_slag(a.data);
  const auto ranges = resolve_split(data, a.split);
  EvalReport report;
  if (a.model == "baseline") {
    report = evaluate_baseline(data, ranges);
  } else {
    if (a.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
    const Model model = load_checkpoint(a.checkpoint);
    report = evaluate_protocol(model, parse_model_kind(a.model), data, ranges,
                               EvalOptions{a.warmup, a.cycles});
  }
  const fs::path dir = make_run_dir(a.out, a.seed);
  write_resolved_config(sub, dir / "config.txt");
  save_with(dir / "report.csv", [&](std::ostream& out) { report.write_csv(out, data.epoch); });
  for (const auto& p : report.partitions) {
    save_slag(p.forecast, dir / ("forecast_" + p.name + ".slag"));
    save_slag(p.map, dir / ("rmse_map_" + p.name + ".slag"));
    render_heatmap(p.map, 0, 0.0, a.max).save(dir / ("rmse_map_" + p.name + ".ppm"));
  }
  const auto& test = report.partition("test");
  render_heatmap(test.forecast, test.forecast.months() - 1, a.min, a.max)
      .save(dir / "forecast_test_last.ppm");
  if (!a.cell.empty()) {
    std::size_t y = 0, x = 0;
    char comma = 0;
    std::istringstream in(a.cell);
    if (!(in >> y >> comma >> x) || comma != ',') {
      throw std::invalid_argument("--cell expects ROW,COL");
    }
    save_with(dir / "cell_truth.csv", [&](std::ostream& out) { write_cell_csv(data, y, x, out); });
    save_with(dir / "cell_forecast_test.csv",
              [&](std::ostream& out) { write_cell_csv(test.forecast, y, x, out); });
  }
  report.write_csv(std::cout, data.epoch);
  for (const auto& p : report.partitions) {
    std::cout << p.name << ": " << p.predicted() << " months predicted, " << p.true_inputs
              << " true input months\n";
  }
  std::cout << "run directory " << dir.string() << '\n';
  return 0;
}

struct RenderArgs {
  std::string data, out, month;
  std::size_t index = 0;
  double min = -0.3, max = 0.3;
};

int run_render(const RenderArgs& a) {
  const GridSeries data = load_slag(a.data);
  const std::size_t t = a.month.empty() ? a.index : month_index(data, parse_year_month(a.month));
  render_heatmap(data, t, a.min, a.max).save(a.out);
  std::cout << "wrote " << a.out << " (" << to_string(data.epoch.plus(static_cast<long>(t)))
            << ", " << data.width() << "x" << data.height() << " pixels)\n";
  return 0;
}

int run_inspect(const std::string& path) {
  io::ByteReader r = io::ByteReader::from_file(path);
  const std::string magic = r.size() >= 4 ? r.bytes(4, "magic") : "";
  if (magic == kSlagMagic) {
    const GridSeries s = load_slag(path);
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (std::size_t t = 0; t < s.months(); ++t) {
      const auto f = s.month(t);
      for (std::size_t i = 0; i < s.cells(); ++i) {
        if (!s.ocean(i)) continue;
        lo = first ? f[i] : std::min(lo, f[i]);
        hi = first ? f[i] : std::max(hi, f[i]);
        first = false;
      }
    }
    std::cout << "SLAG grid series\n"
              << "  months      " << s.months() << " (" << to_string(s.epoch) << " to "
              << to_string(s.epoch.plus(static_cast<long>(s.months()) - 1)) << ")\n"
              << "  grid        " << s.height() << " x " << s.width() << ", " << s.ocean_cells()
              << " ocean cells\n"
              << "  origin      lat " << s.lat0 << ", lon " << s.lon0 << "; cell " << s.dlat
              << " x " << s.dlon << " deg\n"
              << "  fill        " << s.fill << '\n'
              << "  range       " << lo << " .. " << hi << " m\n";
    return 0;
  }
  if (magic == kCheckpointMagic) {
    const Model m = load_checkpoint(path);
    const ModelConfig& c = m.config();
    std::cout << "SLNN checkpoint\n"
              << "  kind        " << to_string(c.kind) << '\n'
              << "  grid        " << c.height << " x " << c.width << '\n'
              << "  parameters  " << m.parameter_count() << '\n'
              << "  normaliser  mean " << m.normalizer.mean << ", std " << m.normalizer.std
              << " m\n";
    for (const auto& p : m.parameters()) {
      std::cout << "    " << std::left << std::setw(28) << p.name << to_string(p.var.shape())
                << (p.trainable ? "" : "  (tracked)") << '\n';
    }
    return 0;
  }
  throw std::invalid_argument(path + " is neither a SLAG series nor an SLNN checkpoint");
}

void add_model_options(CLI::App* sub, ModelArgs& m) {
  sub->add_option("--model", m.model, "lstm | cnn_convlstm | seq_lstm | seq_lstm_p");
  sub->add_option("--lstm-units", m.lstm_units, "units per LSTM layer");
  sub->add_option("--lstm-layers", m.lstm_layers, "stacked LSTM layers");
  sub->add_option("--conv-filters", m.conv_filters, "filters per convolution");
  sub->add_option("--convlstm-units", m.convlstm_units, "channels per ConvLSTM layer");
  sub->add_option("--window", m.window, "sequence length in months (sequence kinds)");
  sub->add_option("--dropout", m.dropout, "recurrent dropout rate (vector kinds)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slacast: gridded sea level anomaly forecasting"};
  app.require_subcommand(1);
  app.set_help_flag("--help", "print this help and exit");  // -h would collide with synth --h
  app.failure_message(CLI::FailureMessage::help);
  app.option_defaults()->always_capture_default();

  std::string config;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("--config", config, "key=value file; command-line flags take precedence")
        ->check(CLI::ExistingFile);
  };

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth", "write a synthetic SLAG series");
  synth_cmd->add_option("--kind", synth_args.kind, "harmonic | wave | mixed");
  synth_cmd->add_option("--h", synth_args.h, "rows");
  synth_cmd->add_option("--w", synth_args.w, "columns");
  synth_cmd->add_option("--t", synth_args.t, "months");
  synth_cmd->add_option("--seed", synth_args.seed);
  synth_cmd->add_option("--noise", synth_args.noise, "correlated noise std (m)");
  synth_cmd->add_flag("--land", synth_args.land, "carve a land blob");
  synth_cmd->add_option("--start", synth_args.start, "first month, YYYY-MM");
  synth_cmd->add_option("-o,--out", synth_args.out, "output .slag file");
  synth_cmd->add_option("--coefficients", synth_args.coefficients,
                        "also write the generating harmonic coefficients as CSV");
  with_config(synth_cmd);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "fit a network on a SLAG series");
  add_model_options(train_cmd, train_args.model);
  train_cmd->add_option("--data", train_args.data)->check(CLI::ExistingFile);
  train_cmd->add_option("--split", train_args.split, "train/val/test years, or months with an m suffix");
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--lr", train_args.lr, "initial learning rate");
  train_cmd->add_option("--decay-interval", train_args.decay_interval,
                        "epochs between learning-rate halvings");
  train_cmd->add_option("--bptt", train_args.bptt, "months per training window (month-ahead kinds)");
  train_cmd->add_option("--batch", train_args.batch, "windows per optimizer step");
  train_cmd->add_option("--stride", train_args.stride, "months between window starts");
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_flag("--quiet", train_args.quiet, "no per-epoch output");
  train_cmd->add_option("--out", train_args.out, "run directory");
  with_config(train_cmd);

  PredictArgs predict_args;
  CLI::App* predict_cmd = app.add_subcommand("predict", "forecast from a checkpoint");
  predict_cmd->add_option("--checkpoint", predict_args.checkpoint)->check(CLI::ExistingFile);
  predict_cmd->add_option("--data", predict_args.data)->check(CLI::ExistingFile);
  predict_cmd->add_option("--until", predict_args.until, "last true month, YYYY-MM");
  predict_cmd->add_option("--warmup", predict_args.warmup, "true months replayed (month-ahead kinds)");
  predict_cmd->add_option("--seed", predict_args.seed, "only names the run directory");
  predict_cmd->add_option("--out", predict_args.out, "run directory");
  with_config(predict_cmd);

  RolloutArgs rollout_args;
  CLI::App* rollout_cmd = app.add_subcommand("rollout", "closed-loop sequence forecast");
  rollout_cmd->add_option("--checkpoint", rollout_args.checkpoint)->check(CLI::ExistingFile);
  rollout_cmd->add_option("--data", rollout_args.data)->check(CLI::ExistingFile);
  rollout_cmd->add_option("--start", rollout_args.start, "first seed month, YYYY-MM");
  rollout_cmd->add_option("--cycles", rollout_args.cycles);
  rollout_cmd->add_option("--seed", rollout_args.seed, "only names the run directory");
  rollout_cmd->add_option("--out", rollout_args.out, "run directory");
  with_config(rollout_cmd);

  BaselineArgs baseline_args;
  CLI::App* baseline_cmd = app.add_subcommand("baseline", "fit the harmonic regression");
  baseline_cmd->add_option("--fit", baseline_args.fit, "SLAG series")->check(CLI::ExistingFile);
  baseline_cmd->add_option("--split", baseline_args.split,
                           "fit the training partition only and score all three");
  baseline_cmd->add_option("--seed", baseline_args.seed, "only names the run directory");
  baseline_cmd->add_option("--out", baseline_args.out, "run directory");
  with_config(baseline_cmd);

  EvaluateArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "score a model per partition");
  eval_cmd->add_option("--model", eval_args.model,
                       "protocol: lstm | cnn_convlstm | seq_lstm | seq_lstm_p | baseline");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data)->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_args.split, "train/val/test years, or months with an m suffix");
  eval_cmd->add_option("--cycles", eval_args.cycles, "closed-loop cycles per partition; 0 covers it");
  eval_cmd->add_option("--warmup", eval_args.warmup, "true months replayed (month-ahead kinds)");
  eval_cmd->add_option("--min", eval_args.min, "colour scale minimum (m)");
  eval_cmd->add_option("--max", eval_args.max, "colour scale maximum (m)");
  eval_cmd->add_option("--cell", eval_args.cell, "ROW,COL time series to export");
  eval_cmd->add_option("--seed", eval_args.seed, "only names the run directory");
  eval_cmd->add_option("--out", eval_args.out, "run directory");
  with_config(eval_cmd);

  RenderArgs render_args;
  CLI::App* render_cmd = app.add_subcommand("render", "draw one month as a PPM heatmap");
  render_cmd->add_option("--data", render_args.data)->check(CLI::ExistingFile);
  render_cmd->add_option("--index", render_args.index, "month index");
  render_cmd->add_option("--month", render_args.month, "month, YYYY-MM (overrides --index)");
  render_cmd->add_option("--min", render_args.min, "colour scale minimum (m)");
  render_cmd->add_option("--max", render_args.max, "colour scale maximum (m)");
  render_cmd->add_option("-o,--out", render_args.out, "output .ppm file");
  with_config(render_cmd);

  std::string inspect_path;
  CLI::App* inspect_cmd = app.add_subcommand("inspect", "summarise a SLAG or SLNN file");
  inspect_cmd->add_option("file", inspect_path)->required()->check(CLI::ExistingFile);

  // Options that must be present once the config file has been applied.
  const std::vector<std::pair<CLI::App*, std::vector<std::string>>> required{
      {synth_cmd, {"--out"}},
      {train_cmd, {"--data"}},
      {predict_cmd, {"--checkpoint", "--data"}},
      {rollout_cmd, {"--checkpoint", "--data"}},
      {baseline_cmd, {"--fit"}},
      {eval_cmd, {"--model", "--data"}},
      {render_cmd, {"--data", "--out"}},
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!config.empty()) apply_config_file(*sub, config);
    for (const auto& [cmd, names] : required) {
      if (cmd != sub) continue;
      for (const auto& name : names) {
        if (sub->get_option(name)->count() == 0) {
          std::cerr << sub->help() << "\nerror: " << name << " is required\n";
          return 2;
        }
      }
    }
    if (sub == synth_cmd) return run_synth(synth_args);
    if (sub == train_cmd) return run_train(train_args, *sub);
    if (sub == predict_cmd) return run_predict(predict_args, *sub);
    if (sub == rollout_cmd) return run_rollout(rollout_args, *sub);
    if (sub == baseline_cmd) return run_baseline(baseline_args, *sub);
    if (sub == eval_cmd) return run_evaluate(eval_args, *sub);
    if (sub == render_cmd) return run_render(render_args);
    return run_inspect(inspect_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
