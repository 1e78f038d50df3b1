#include "htan_cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "htan/config.hpp"
#include "htan/errors.hpp"
#include "htan/sequence.hpp"

namespace htan::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw std::ios_base::failure("failed writing '" + path.string() + "'");
}

std::string num(double v) { return cfg::format(v); }

const char* player_name(train::Player p) { return p == train::Player::phi ? "phi" : "theta"; }

json eval_json(const train::EvalResult& r) {
  json tasks = json::array();
  for (std::size_t t = 0; t < r.task_loss.size(); ++t) {
    tasks.push_back({{"task", t}, {"loss", r.task_loss[t]}, {"accuracy", r.task_accuracy[t]}});
  }
  return {{"tasks", tasks}, {"mean_loss", r.mean_loss()}};
}

}  // namespace

void write_metrics_csv(const fs::path& path, const std::vector<train::EpochRecord>& records) {
  auto out = open_out(path);
  out << "epoch,task_id,loss,acc,reg_value,ltheta_value,wall_ms\n";
  for (const auto& r : records) {
    for (std::size_t t = 0; t < r.task_loss.size(); ++t) {
      out << r.epoch << ',' << t << ',' << num(r.task_loss[t]) << ',' << num(r.task_accuracy[t]) << ','
          << num(r.reg_value) << ',' << num(r.ltheta_value) << ",0\n";
    }
  }
  if (!out) throw std::ios_base::failure("failed writing '" + path.string() + "'");
}

void write_timing_csv(const fs::path& path, const std::vector<train::EpochRecord>& records) {
  auto out = open_out(path);
  out << "epoch,wall_ms\n";
  for (const auto& r : records) out << r.epoch << ',' << num(r.wall_ms) << '\n';
}

std::vector<AnalysisRow> analysis_rows(train::Model& model, const data::SequenceBatch& data) {
  const auto slots = train::analyze(model, data);
  const auto gt = data::ground_truth_relation(data);
  const std::size_t tasks = data.tasks;
  std::vector<std::vector<std::vector<double>>> cov;  // [i][j][slot]
  if (tasks >= 2) {
    cov.assign(tasks, std::vector<std::vector<double>>(tasks));
    for (std::size_t i = 0; i < tasks; ++i)
      for (std::size_t j = i + 1; j < tasks; ++j) cov[i][j] = data::mean_abs_covariance(data, i, j);
  }
  std::vector<AnalysisRow> rows;
  for (const auto& s : slots) {
    AnalysisRow base;
    base.block = s.block;
    base.slot = s.slot;
    base.metric_cond = s.metric_condition;
    base.gt_coupling = gt[s.slot];
    if (tasks < 2) {
      rows.push_back(base);
      continue;
    }
    for (std::size_t i = 0; i < tasks; ++i) {
      for (std::size_t j = i + 1; j < tasks; ++j) {
        AnalysisRow r = base;
        r.task_i = i;
        r.task_j = j;
        r.d_sq = s.distances.at(i, j);
        r.abs_cov = cov[i][j][s.slot];
        rows.push_back(r);
      }
    }
  }
  return rows;
}

void write_analysis_csv(const fs::path& path, const std::vector<AnalysisRow>& rows) {
  auto out = open_out(path);
  out << "block,slot,task_i,task_j,d_sq,metric_cond,gt_coupling,abs_cov\n";
  auto opt = [](const auto& v) { return v ? num(static_cast<double>(*v)) : std::string(); };
  for (const auto& r : rows) {
    out << r.block << ',' << r.slot << ',' << (r.task_i ? std::to_string(*r.task_i) : "") << ','
        << (r.task_j ? std::to_string(*r.task_j) : "") << ',' << opt(r.d_sq) << ',' << num(r.metric_cond) << ','
        << num(r.gt_coupling) << ',' << opt(r.abs_cov) << '\n';
  }
  if (!out) throw std::ios_base::failure("failed writing '" + path.string() + "'");
}

double relation_spearman(const std::vector<AnalysisRow>& rows) {
  std::size_t slots = 0;
  for (const auto& r : rows) slots = std::max(slots, r.slot + 1);
  std::vector<double> d(slots, 0.0), count(slots, 0.0), gt(slots, 0.0);
  for (const auto& r : rows) {
    gt[r.slot] = r.gt_coupling;
    if (!r.d_sq) continue;
    d[r.slot] += *r.d_sq;
    count[r.slot] += 1.0;
  }
  if (slots < 2 || count[0] == 0.0) return 0.0;
  for (std::size_t n = 0; n < slots; ++n) d[n] /= count[n];
  return data::spearman(d, gt);
}

void write_covariance_csv(const fs::path& path, const data::SequenceBatch& data) {
  if (data.tasks < 2) throw std::invalid_argument("covariance needs at least two tasks");
  const auto gt = data::ground_truth_relation(data);
  auto out = open_out(path);
  out << "slot,task_i,task_j,abs_cov,gt_coupling\n";
  for (std::size_t i = 0; i < data.tasks; ++i) {
    for (std::size_t j = i + 1; j < data.tasks; ++j) {
      const auto cov = data::mean_abs_covariance(data, i, j);
      for (std::size_t n = 0; n < data.seq_len; ++n) {
        out << n << ',' << i << ',' << j << ',' << num(cov[n]) << ',' << num(gt[n]) << '\n';
      }
    }
  }
  if (!out) throw std::ios_base::failure("failed writing '" + path.string() + "'");
}

TrainOutcome run_training(const RunConfig& input, std::ostream& log) {
  RunConfig config = input;
  config.finalize();
  TrainOutcome outcome;
  outcome.dir = config.out_dir;
  fs::create_directories(outcome.dir);
  write_text(outcome.dir / "resolved.cfg", config.to_text());
  write_text(outcome.dir / "seed.txt", "data_seed = " + std::to_string(config.data.seed) +
                                           "\ntrain_seed = " + std::to_string(config.train.seed) + "\n");

  const data::SequenceBatch train_set = data::generate_dataset(config.data, data::Split::train);
  const data::SequenceBatch test_set = data::generate_dataset(config.test_spec(), data::Split::test);
  data::save_dataset(outcome.dir / "train.data", config.data, train_set);
  data::save_dataset(outcome.dir / "test.data", config.test_spec(), test_set);

  train::Model model(config.train);
  train::Trainer trainer(model, config.train);
  for (std::size_t e = 1; e <= config.train.epochs; ++e) {
    try {
      outcome.epochs.push_back(trainer.train_epoch(train_set));
    } catch (const train::TrainingAborted& err) {
      write_text(outcome.dir / "diagnostics.txt", err.diagnostics());
      write_metrics_csv(outcome.dir / "metrics.csv", outcome.epochs);
      throw;
    }
    const auto& r = outcome.epochs.back();
    log << "epoch " << r.epoch;
    for (std::size_t t = 0; t < r.task_loss.size(); ++t) {
      log << "  task" << t << " loss " << num(r.task_loss[t]) << " acc " << num(r.task_accuracy[t]);
    }
    log << "  reg " << num(r.reg_value) << "  ltheta " << num(r.ltheta_value) << '\n';
    write_metrics_csv(outcome.dir / "metrics.csv", outcome.epochs);
    if (config.checkpoint_every > 0 && e % config.checkpoint_every == 0) {
      train::save_model(outcome.dir / ("checkpoint_epoch" + std::to_string(e) + ".htan"), model);
    }
  }
  write_timing_csv(outcome.dir / "timing.csv", outcome.epochs);
  train::save_model(outcome.dir / "model.htan", model);

  outcome.test = train::evaluate(model, test_set);
  outcome.checks = trainer.checks();
  outcome.invariants = trainer.invariants();
  const auto rows = analysis_rows(model, test_set);
  write_analysis_csv(outcome.dir / "analysis.csv", rows);
  outcome.relation_spearman = relation_spearman(rows);

  {
    auto out = open_out(outcome.dir / "checks.csv");
    out << "step,player,derivative\n";
    for (const auto& c : outcome.checks) out << c.step << ',' << player_name(c.player) << ',' << num(c.derivative) << '\n';
  }

  std::size_t passed = 0;
  for (const auto& c : outcome.checks) passed += c.passed() ? 1 : 0;
  const auto& inv = outcome.invariants;
  json summary = {
      {"test", eval_json(outcome.test)},
      {"final_epoch",
       {{"epoch", outcome.epochs.back().epoch},
        {"task_loss", outcome.epochs.back().task_loss},
        {"task_accuracy", outcome.epochs.back().task_accuracy},
        {"reg_value", outcome.epochs.back().reg_value},
        {"ltheta_value", outcome.epochs.back().ltheta_value}}},
      {"directional_checks", {{"total", outcome.checks.size()}, {"passed", passed}}},
      {"invariants",
       {{"metrics_checked", inv.metrics_checked},
        {"spd_violations", inv.spd_violations},
        {"min_eigenvalue", inv.worst_min_eigenvalue},
        {"max_asymmetry", inv.worst_asymmetry},
        {"stiefel_checks", inv.stiefel_checks},
        {"stiefel_violations", inv.stiefel_violations},
        {"max_orthogonality_error", inv.worst_orthogonality},
        {"checksum_violations", inv.checksum_violations}}},
      {"relation_spearman", outcome.relation_spearman},
      {"seed", config.train.seed},
  };
  write_text(outcome.dir / "summary.json", summary.dump(2) + "\n");
  return outcome;
}

// --- Command line -----------------------------------------------------------

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "Run configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--override", o.overrides, "key=value or section.key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "Sets both the data and the training seed");
  cmd->add_option("--out", o.out, "Output directory");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig rc = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  for (const auto& ov : o.overrides) rc.apply_override(ov);
  if (o.seed) rc.set_seed(*o.seed);
  if (!o.out.empty()) rc.out_dir = o.out;
  rc.finalize();
  return rc;
}

void check_dims(const train::Model& model, const data::SequenceBatch& data) {
  const auto& m = model.config().model;
  auto mismatch = [](const char* field, std::size_t a, std::size_t b) {
    throw ConfigError(std::string("dimension mismatch in '") + field + "': checkpoint has " + std::to_string(a) +
                      ", dataset has " + std::to_string(b));
  };
  if (m.tasks != data.tasks) mismatch("tasks", m.tasks, data.tasks);
  if (m.input_size != data.input_dim) mismatch("input_dim", m.input_size, data.input_dim);
  if (m.classes != data.classes) mismatch("classes", m.classes, data.classes);
}

fs::path output_dir(const std::string& out, const fs::path& fallback) {
  fs::path dir = out.empty() ? fallback : fs::path(out);
  if (dir.empty()) dir = ".";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical-temporal activation network with SPD metric regularization", "htan"};
  app.require_subcommand(1);

  CommonOptions train_opts, gen_opts, count_opts, cov_opts;
  auto* train_cmd = app.add_subcommand("train", "Train on the synthetic regime-switching dataset");
  add_common(train_cmd, train_opts);

  std::string ckpt, data_path, eval_out, analyze_out;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
  eval_cmd->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--data", data_path, "Dataset file")->required();
  eval_cmd->add_option("--out", eval_out, "Directory for eval.json (default: next to the checkpoint)");

  auto* analyze_cmd = app.add_subcommand("analyze", "Per-slot distance and metric report");
  analyze_cmd->add_option("--checkpoint", ckpt, "Model checkpoint")->required();
  analyze_cmd->add_option("--data", data_path, "Dataset file")->required();
  analyze_cmd->add_option("--out", analyze_out, "Directory for analysis.csv (default: next to the checkpoint)");

  auto* cov_cmd = app.add_subcommand("covariance", "Per-slot |cov| between task labels");
  cov_cmd->add_option("--data", data_path, "Dataset file (default: generate the training split from the config)");
  add_common(cov_cmd, cov_opts);

  auto* gen_cmd = app.add_subcommand("gen-data", "Write train.data and test.data");
  add_common(gen_cmd, gen_opts);

  auto* count_cmd = app.add_subcommand("param-count", "Parameter census against the soft-sharing baseline");
  add_common(count_cmd, count_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      const auto outcome = run_training(resolve(train_opts), out);
      out << "test mean loss " << num(outcome.test.mean_loss()) << "  relation spearman "
          << num(outcome.relation_spearman) << "\nwrote " << outcome.dir.string() << '\n';
    } else if (*eval_cmd) {
      train::Model model = train::load_model(ckpt);
      const auto data = data::load_dataset(data_path);
      check_dims(model, data);
      const auto r = train::evaluate(model, data);
      for (std::size_t t = 0; t < r.task_loss.size(); ++t) {
        out << "task " << t << ": loss " << num(r.task_loss[t]) << "  accuracy " << num(r.task_accuracy[t]) << '\n';
      }
      json j = eval_json(r);
      j["checkpoint"] = ckpt;
      j["data"] = data_path;
      const auto dir = output_dir(eval_out, fs::path(ckpt).parent_path());
      write_text(dir / "eval.json", j.dump(2) + "\n");
      out << j.dump() << '\n';
    } else if (*analyze_cmd) {
      train::Model model = train::load_model(ckpt);
      const auto data = data::load_dataset(data_path);
      check_dims(model, data);
      const auto rows = analysis_rows(model, data);
      const auto dir = output_dir(analyze_out, fs::path(ckpt).parent_path());
      write_analysis_csv(dir / "analysis.csv", rows);
      out << "wrote " << (dir / "analysis.csv").string() << " (" << rows.size() << " rows)\n";
      if (data.tasks >= 2) out << "relation spearman " << num(relation_spearman(rows)) << '\n';
    } else if (*cov_cmd) {
      data::SequenceBatch data;
      fs::path dir;
      if (!data_path.empty()) {
        data = data::load_dataset(data_path);
        dir = output_dir(cov_opts.out, fs::path(data_path).parent_path());
      } else {
        const RunConfig rc = resolve(cov_opts);
        data = data::generate_dataset(rc.data, data::Split::train);
        dir = output_dir(cov_opts.out, rc.out_dir);
      }
      write_covariance_csv(dir / "covariance.csv", data);
      out << "wrote " << (dir / "covariance.csv").string() << '\n';
    } else if (*gen_cmd) {
      const RunConfig rc = resolve(gen_opts);
      const auto dir = output_dir("", rc.out_dir);
      data::save_dataset(dir / "train.data", rc.data, data::generate_dataset(rc.data, data::Split::train));
      data::save_dataset(dir / "test.data", rc.test_spec(), data::generate_dataset(rc.test_spec(), data::Split::test));
      out << "wrote " << (dir / "train.data").string() << " and " << (dir / "test.data").string() << '\n';
    } else if (*count_cmd) {
      const RunConfig rc = resolve(count_opts);
      const auto pc = seq::parameter_count(rc.train.model, rc.train.spd_layers);
      const auto crossover = seq::parameter_crossover(rc.train.model, rc.train.spd_layers);
      out << "HTAN-SPD (T = " << rc.train.model.tasks << ")\n"
          << "  encoders    " << pc.htan_encoders << "\n"
          << "  beta/alpha  " << pc.htan_aux << "\n"
          << "  embeddings  " << pc.htan_embeddings << "\n"
          << "  heads       " << pc.htan_heads << "\n"
          << "  spdnets     " << pc.htan_spdnets << "\n"
          << "  total       " << pc.htan_total << "\n"
          << "soft-sharing baseline (T + 1 stacks)\n"
          << "  encoders    " << pc.baseline_encoders << "\n"
          << "  heads       " << pc.baseline_heads << "\n"
          << "  total       " << pc.baseline_total << "\n"
          << "crossover T   " << (crossover ? std::to_string(*crossover) : std::string("none up to 64")) << '\n';
    }
  } catch (const train::TrainingAborted& e) {
    err << "error: " << e.what() << " (see diagnostics.txt in the run directory)\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::ios_base::failure& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace htan::cli
