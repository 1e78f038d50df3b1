#include "htan/synthetic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "htan/checkpoint.hpp"
#include "htan/config.hpp"
#include "htan/errors.hpp"
#include "htan/random.hpp"

namespace htan::data {

std::vector<std::vector<double>> RegimeSwitchingSpec::transition_matrix() const {
  if (!transition.empty()) return transition;
  const std::size_t r = regimes();
  std::vector<std::vector<double>> p(r, std::vector<double>(r, 0.0));
  if (r == 1) {
    p[0][0] = 1.0;
    return p;
  }
  const double leave = 1.0 / dwell;
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < r; ++j) p[i][j] = i == j ? 1.0 - leave : leave / static_cast<double>(r - 1);
  }
  return p;
}

void RegimeSwitchingSpec::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("dataset spec: " + m); };
  if (tasks < 1) fail("tasks must be >= 1");
  if (input_dim < 1 || seq_len < 1 || sequences < 1) fail("input_dim, seq_len and sequences must be >= 1");
  if (classes < 2) fail("classes must be >= 2");
  if (classes > input_dim) fail("classes must not exceed input_dim (class means use distinct coordinates)");
  if (coupling.empty()) fail("at least one regime coupling is required");
  for (double rho : coupling) {
    if (!(rho >= 0.0 && rho <= 1.0)) fail("coupling values must lie in [0, 1]");
  }
  if (initial_regime >= regimes()) fail("initial_regime out of range");
  if (!(class_separation > 0.0) || !std::isfinite(class_separation)) fail("class_separation must be positive");
  if (transition.empty()) {
    if (!(dwell >= 1.0) || !std::isfinite(dwell)) fail("dwell must be >= 1");
    return;
  }
  if (transition.size() != regimes()) fail("transition matrix must be R x R with R = number of couplings");
  for (const auto& row : transition) {
    if (row.size() != regimes()) fail("transition matrix must be R x R with R = number of couplings");
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) fail("transition probabilities must be nonnegative");
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-12) fail("transition rows must sum to 1 (got " + cfg::format(s) + ")");
  }
}

void RegimeSwitchingSpec::set(const std::string& key, const std::string& value) {
  if (key == "tasks") tasks = cfg::to_size(value);
  else if (key == "input_dim") input_dim = cfg::to_size(value);
  else if (key == "seq_len") seq_len = cfg::to_size(value);
  else if (key == "classes") classes = cfg::to_size(value);
  else if (key == "sequences") sequences = cfg::to_size(value);
  else if (key == "transition") transition = cfg::to_matrix(value);
  else if (key == "dwell") dwell = cfg::to_double(value);
  else if (key == "coupling") coupling = cfg::to_doubles(value);
  else if (key == "initial_regime") initial_regime = cfg::to_size(value);
  else if (key == "class_separation") class_separation = cfg::to_double(value);
  else if (key == "seed") seed = cfg::to_u64(value);
  else throw std::invalid_argument("unknown [data] key '" + key + "'");
}

std::string RegimeSwitchingSpec::to_text() const {
  std::ostringstream os;
  os << "[data]\n"
     << "tasks = " << tasks << "\n"
     << "input_dim = " << input_dim << "\n"
     << "seq_len = " << seq_len << "\n"
     << "classes = " << classes << "\n"
     << "sequences = " << sequences << "\n"
     << "transition = " << cfg::format(transition) << "\n"
     << "dwell = " << cfg::format(dwell) << "\n"
     << "coupling = " << cfg::format(coupling) << "\n"
     << "initial_regime = " << initial_regime << "\n"
     << "class_separation = " << cfg::format(class_separation) << "\n"
     << "seed = " << seed << "\n";
  return os.str();
}

RegimeSwitchingSpec RegimeSwitchingSpec::parse(const std::string& text) {
  RegimeSwitchingSpec spec;
  for (const auto& e : cfg::parse_entries(text)) {
    if (!e.section.empty() && e.section != "data") {
      throw std::invalid_argument("line " + std::to_string(e.line) + ": unexpected section [" + e.section + "]");
    }
    try {
      spec.set(e.key, e.value);
    } catch (const std::invalid_argument& err) {
      throw std::invalid_argument("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  spec.validate();
  return spec;
}

std::span<const double> SequenceBatch::input(std::size_t seq, std::size_t slot) const {
  return {inputs.data() + (seq * seq_len + slot) * input_dim, input_dim};
}

namespace {

std::size_t draw(std::span<const double> probs, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

}  // namespace

SequenceBatch generate_dataset(const RegimeSwitchingSpec& spec, Split split) {
  spec.validate();
  const auto b = spec.sequences, n = spec.seq_len, d = spec.input_dim, c = spec.classes;

  // Class k's mean sits on coordinate coord[k]; shared by every split.
  Rng world(spec.seed);
  std::vector<std::size_t> coord(d);
  std::iota(coord.begin(), coord.end(), std::size_t{0});
  std::shuffle(coord.begin(), coord.end(), world);
  coord.resize(c);

  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(split)};
  Rng rng(seq);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> uniform_class(0, static_cast<int>(c) - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto p = spec.transition_matrix();

  SequenceBatch out;
  out.tasks = spec.tasks;
  out.seq_len = n;
  out.input_dim = d;
  out.classes = c;
  out.coupling = spec.coupling;
  out.inputs = Tensor({b, n, d}, 0.0);
  out.labels.assign(spec.tasks, std::vector<int>(b * n, 0));
  out.regimes.assign(b * n, 0);

  for (std::size_t s = 0; s < b; ++s) {
    std::size_t regime = spec.initial_regime;
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0) regime = draw(p[regime], rng);
      const std::size_t at = s * n + t;
      out.regimes[at] = static_cast<int>(regime);

      const int latent = uniform_class(rng);
      double* x = out.inputs.data() + at * d;
      for (std::size_t k = 0; k < d; ++k) x[k] = noise(rng);
      x[coord[static_cast<std::size_t>(latent)]] += spec.class_separation;

      int y1 = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (x[coord[k]] > x[coord[static_cast<std::size_t>(y1)]]) y1 = static_cast<int>(k);
      }
      out.labels[0][at] = y1;
      for (std::size_t task = 1; task < spec.tasks; ++task) {
        const bool copy = unit(rng) < spec.coupling[regime];
        const int other = uniform_class(rng);
        out.labels[task][at] = copy ? y1 : other;
      }
    }
  }
  return out;
}

double empirical_covariance(std::span<const int> y1, std::span<const int> y2, int a, int b) {
  if (y1.empty()) throw std::invalid_argument("empirical_covariance: empty slot");
  if (y1.size() != y2.size()) throw ShapeError("empirical_covariance: label vectors differ in length");
  double s1 = 0.0, s2 = 0.0, s12 = 0.0;
  for (std::size_t i = 0; i < y1.size(); ++i) {
    const double u = y1[i] == a ? 1.0 : 0.0;
    const double v = y2[i] == b ? 1.0 : 0.0;
    s1 += u;
    s2 += v;
    s12 += u * v;
  }
  const double m = static_cast<double>(y1.size());
  return s12 / m - (s1 / m) * (s2 / m);
}

namespace {

void check_pair(const SequenceBatch& batch, std::size_t i, std::size_t j) {
  if (i >= batch.tasks || j >= batch.tasks) throw std::invalid_argument("covariance: task index out of range");
}

std::vector<int> slot_labels(const SequenceBatch& batch, std::size_t task, std::size_t slot) {
  std::vector<int> y(batch.size());
  for (std::size_t s = 0; s < y.size(); ++s) y[s] = batch.label(task, s, slot);
  return y;
}

}  // namespace

double slot_covariance(const SequenceBatch& batch, std::size_t task_i, std::size_t task_j, std::size_t slot, int a,
                       int b) {
  check_pair(batch, task_i, task_j);
  if (slot >= batch.seq_len) throw std::invalid_argument("slot_covariance: slot out of range");
  return empirical_covariance(slot_labels(batch, task_i, slot), slot_labels(batch, task_j, slot), a, b);
}

std::vector<double> mean_abs_covariance(const SequenceBatch& batch, std::size_t task_i, std::size_t task_j) {
  check_pair(batch, task_i, task_j);
  const int c = static_cast<int>(batch.classes);
  std::vector<double> out(batch.seq_len, 0.0);
  for (std::size_t n = 0; n < batch.seq_len; ++n) {
    const auto y1 = slot_labels(batch, task_i, n);
    const auto y2 = slot_labels(batch, task_j, n);
    double acc = 0.0;
    for (int a = 0; a < c; ++a)
      for (int b = 0; b < c; ++b) acc += std::fabs(empirical_covariance(y1, y2, a, b));
    out[n] = acc / static_cast<double>(c * c);
  }
  return out;
}

std::vector<double> ground_truth_relation(const SequenceBatch& batch) {
  std::vector<double> out(batch.seq_len, 0.0);
  const auto b = batch.size();
  for (std::size_t n = 0; n < batch.seq_len; ++n) {
    double acc = 0.0;
    for (std::size_t s = 0; s < b; ++s) acc += batch.coupling.at(static_cast<std::size_t>(batch.regime(s, n)));
    out[n] = acc / static_cast<double>(b);
  }
  return out;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void save_dataset(const std::filesystem::path& path, const RegimeSwitchingSpec& spec, const SequenceBatch& batch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
  const std::string text = spec.to_text();
  const auto len = static_cast<std::uint64_t>(text.size());
  for (std::size_t i = 0; i < 8; ++i) out.put(static_cast<char>((len >> (8 * i)) & 0xFF));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  const auto bn = batch.regimes.size();
  Tensor labels({batch.tasks, bn});
  for (std::size_t t = 0; t < batch.tasks; ++t)
    for (std::size_t i = 0; i < bn; ++i) labels[t * bn + i] = batch.labels[t][i];
  Tensor regimes({bn});
  for (std::size_t i = 0; i < bn; ++i) regimes[i] = batch.regimes[i];
  write_container(out, {{"inputs", batch.inputs}, {"labels", labels}, {"regimes", regimes}});
  if (!out) throw std::ios_base::failure("failed writing '" + path.string() + "'");
}

SequenceBatch load_dataset(const std::filesystem::path& path, RegimeSwitchingSpec* spec_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open '" + path.string() + "'");
  std::uint64_t len = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const int ch = in.get();
    if (ch == EOF) throw FormatError("truncated dataset header");
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * i);
  }
  if (len > (1u << 20)) throw FormatError("implausible dataset header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated dataset header");
  RegimeSwitchingSpec spec;
  try {
    spec = RegimeSwitchingSpec::parse(text);
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("dataset header: ") + e.what());
  }
  const TensorBundle bundle = read_container(in);

  SequenceBatch batch;
  batch.inputs = find_tensor(bundle, "inputs");
  const Tensor& labels = find_tensor(bundle, "labels");
  const Tensor& regimes = find_tensor(bundle, "regimes");
  if (batch.inputs.rank() != 3 || labels.rank() != 2 || regimes.rank() != 1) throw FormatError("dataset: bad tensor ranks");
  batch.seq_len = batch.inputs.shape()[1];
  batch.input_dim = batch.inputs.shape()[2];
  batch.tasks = labels.shape()[0];
  batch.classes = spec.classes;
  batch.coupling = spec.coupling;
  const auto bn = regimes.size();
  if (bn != batch.inputs.shape()[0] * batch.seq_len || labels.shape()[1] != bn || batch.tasks != spec.tasks ||
      batch.input_dim != spec.input_dim || batch.seq_len != spec.seq_len) {
    throw FormatError("dataset: tensor dimensions disagree with the header");
  }
  batch.labels.assign(batch.tasks, std::vector<int>(bn));
  for (std::size_t t = 0; t < batch.tasks; ++t) {
    for (std::size_t i = 0; i < bn; ++i) {
      const double v = labels[t * bn + i];
      if (v < 0 || v >= static_cast<double>(batch.classes)) throw FormatError("dataset: label out of range");
      batch.labels[t][i] = static_cast<int>(v);
    }
  }
  batch.regimes.resize(bn);
  for (std::size_t i = 0; i < bn; ++i) {
    const double v = regimes[i];
    if (v < 0 || v >= static_cast<double>(spec.regimes())) throw FormatError("dataset: regime id out of range");
    batch.regimes[i] = static_cast<int>(v);
  }
  if (spec_out) *spec_out = spec;
  return batch;
}

}  // namespace htan::data
