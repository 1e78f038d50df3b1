#include "htan_cli/run_config.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "htan/config.hpp"

namespace htan::cli {

namespace {

struct Section {
  const char* name;
  std::vector<const char*> keys;
};

const std::array<Section, 4>& sections() {
  static const std::array<Section, 4> s{{
      {"data",
       {"tasks", "input_dim", "seq_len", "classes", "train_sequences", "test_sequences", "transition", "dwell",
        "coupling", "initial_regime", "class_separation", "seed"}},
      {"model", {"blocks", "basis", "hidden", "aux_hidden", "spd_layers", "encoder", "spd_init"}},
      {"train",
       {"lambda", "lr_phi", "lr_theta", "theta_period", "epochs", "batch_size", "seed", "detach_metric", "adam_beta1",
        "adam_beta2", "adam_eps", "checkpoint_every"}},
      {"output", {"out_dir"}},
  }};
  return s;
}

std::size_t parse_period(const std::string& v) {
  const std::string s = cfg::trim(v);
  if (s == "inf" || s == "never" || s == "0") return 0;
  return cfg::to_size(s);
}

}  // namespace

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  auto& m = train.model;
  try {
    if (section == "data") {
      if (key == "train_sequences") data.sequences = cfg::to_size(value);
      else if (key == "test_sequences") test_sequences = cfg::to_size(value);
      else if (key == "sequences") throw ConfigError("unknown [data] key 'sequences' (use train_sequences)");
      else data.set(key, value);
    } else if (section == "model") {
      if (key == "blocks") m.blocks = cfg::to_size(value);
      else if (key == "basis") m.basis = cfg::to_size(value);
      else if (key == "hidden") m.hidden_size = cfg::to_size(value);
      else if (key == "aux_hidden") m.aux_hidden = cfg::to_size(value);
      else if (key == "spd_layers") train.spd_layers = cfg::to_size(value);
      else if (key == "encoder") {
        const std::string v = cfg::trim(value);
        if (v == "lstm") m.encoder = seq::EncoderKind::lstm;
        else if (v == "attention") m.encoder = seq::EncoderKind::attention;
        else throw ConfigError("encoder must be 'lstm' or 'attention', got '" + v + "'");
      } else if (key == "spd_init") {
        const std::string v = cfg::trim(value);
        if (v == "gram") train.spd_identity_init = false;
        else if (v == "identity") train.spd_identity_init = true;
        else throw ConfigError("spd_init must be 'gram' or 'identity', got '" + v + "'");
      } else {
        throw ConfigError("unknown [model] key '" + key + "'");
      }
    } else if (section == "train") {
      if (key == "lambda") train.lambda = cfg::to_double(value);
      else if (key == "lr_phi") train.lr_phi = cfg::to_double(value);
      else if (key == "lr_theta") train.lr_theta = cfg::to_double(value);
      else if (key == "theta_period") train.theta_period = parse_period(value);
      else if (key == "epochs") train.epochs = cfg::to_size(value);
      else if (key == "batch_size") train.batch_size = cfg::to_size(value);
      else if (key == "seed") train.seed = cfg::to_u64(value);
      else if (key == "detach_metric") train.detach_metric = cfg::to_bool(value);
      else if (key == "adam_beta1") train.adam_beta1 = cfg::to_double(value);
      else if (key == "adam_beta2") train.adam_beta2 = cfg::to_double(value);
      else if (key == "adam_eps") train.adam_eps = cfg::to_double(value);
      else if (key == "checkpoint_every") checkpoint_every = cfg::to_size(value);
      else throw ConfigError("unknown [train] key '" + key + "'");
    } else if (section == "output") {
      if (key == "out_dir") out_dir = cfg::trim(value);
      else throw ConfigError("unknown [output] key '" + key + "'");
    } else {
      throw ConfigError("unknown section [" + section + "]");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string lhs = cfg::trim(std::string_view(assignment).substr(0, eq));
  const std::string value = cfg::trim(std::string_view(assignment).substr(eq + 1));
  const auto dot = lhs.find('.');
  if (dot != std::string::npos) {
    set(lhs.substr(0, dot), lhs.substr(dot + 1), value);
    return;
  }
  std::vector<std::string> owners;
  for (const auto& s : sections()) {
    for (const char* k : s.keys) {
      if (lhs == k) owners.push_back(s.name);
    }
  }
  if (owners.empty()) throw ConfigError("override: unknown key '" + lhs + "'");
  if (owners.size() > 1) {
    throw ConfigError("override: key '" + lhs + "' is ambiguous; write " + owners[0] + "." + lhs + " or " + owners[1] +
                      "." + lhs);
  }
  set(owners[0], lhs, value);
}

void RunConfig::set_seed(std::uint64_t seed) {
  data.seed = seed;
  train.seed = seed;
}

void RunConfig::finalize() {
  train.model.tasks = data.tasks;
  train.model.input_size = data.input_dim;
  train.model.classes = data.classes;
  try {
    data.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (test_sequences < 1) throw ConfigError("data.test_sequences must be >= 1");
  if (out_dir.empty()) throw ConfigError("output.out_dir must not be empty");
}

std::string RunConfig::to_text() const {
  const auto& m = train.model;
  std::ostringstream os;
  os << "[data]\n"
     << "tasks = " << data.tasks << "\n"
     << "input_dim = " << data.input_dim << "\n"
     << "seq_len = " << data.seq_len << "\n"
     << "classes = " << data.classes << "\n"
     << "train_sequences = " << data.sequences << "\n"
     << "test_sequences = " << test_sequences << "\n"
     << "transition = " << cfg::format(data.transition) << "\n"
     << "dwell = " << cfg::format(data.dwell) << "\n"
     << "coupling = " << cfg::format(data.coupling) << "\n"
     << "initial_regime = " << data.initial_regime << "\n"
     << "class_separation = " << cfg::format(data.class_separation) << "\n"
     << "seed = " << data.seed << "\n\n"
     << "[model]\n"
     << "blocks = " << m.blocks << "\n"
     << "basis = " << m.basis << "\n"
     << "hidden = " << m.hidden_size << "\n"
     << "aux_hidden = " << m.aux_hidden << "\n"
     << "spd_layers = " << train.spd_layers << "\n"
     << "encoder = " << (m.encoder == seq::EncoderKind::lstm ? "lstm" : "attention") << "\n"
     << "spd_init = " << (train.spd_identity_init ? "identity" : "gram") << "\n\n"
     << "[train]\n"
     << "lambda = " << cfg::format(train.lambda) << "\n"
     << "lr_phi = " << cfg::format(train.lr_phi) << "\n"
     << "lr_theta = " << cfg::format(train.lr_theta) << "\n"
     << "theta_period = " << (train.theta_period == 0 ? std::string("never") : std::to_string(train.theta_period))
     << "\n"
     << "epochs = " << train.epochs << "\n"
     << "batch_size = " << train.batch_size << "\n"
     << "seed = " << train.seed << "\n"
     << "detach_metric = " << (train.detach_metric ? "true" : "false") << "\n"
     << "adam_beta1 = " << cfg::format(train.adam_beta1) << "\n"
     << "adam_beta2 = " << cfg::format(train.adam_beta2) << "\n"
     << "adam_eps = " << cfg::format(train.adam_eps) << "\n"
     << "checkpoint_every = " << checkpoint_every << "\n\n"
     << "[output]\n"
     << "out_dir = " << out_dir.string() << "\n";
  return os.str();
}

data::RegimeSwitchingSpec RunConfig::test_spec() const {
  data::RegimeSwitchingSpec s = data;
  s.sequences = test_sequences;
  return s;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::vector<cfg::Entry> entries;
  try {
    entries = cfg::parse_entries(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& e : entries) {
    if (e.section.empty()) {
      throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key + "' appears before any [section]");
    }
    try {
      rc.set(e.section, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace htan::cli
