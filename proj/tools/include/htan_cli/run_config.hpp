#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "htan/synthetic.hpp"
#include "htan/training.hpp"

namespace htan::cli {

/// Raised for malformed or unknown configuration; the message carries the
/// line number when one is known.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a run needs: the dataset spec, training settings and where to
/// write results.
///
///   [data]    tasks, input_dim, seq_len, classes, train_sequences,
///             test_sequences, transition, dwell, coupling, initial_regime,
///             class_separation, seed
///   [model]   blocks, basis, hidden, aux_hidden, spd_layers, encoder, spd_init
///   [train]   lambda, lr_phi, lr_theta, theta_period, epochs, batch_size,
///             seed, detach_metric, adam_beta1, adam_beta2, adam_eps,
///             checkpoint_every
///   [output]  out_dir
struct RunConfig {
  data::RegimeSwitchingSpec data;  // data.sequences is the training split size
  std::size_t test_sequences = 200;
  train::TrainConfig train;
  std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 keeps only the final one
  std::filesystem::path out_dir = "runs/default";

  /// Assigns `section.key`; throws ConfigError for unknown keys or bad values.
  void set(const std::string& section, const std::string& key, const std::string& value);
  /// `key=value` or `section.key=value`. A bare key must be unambiguous.
  void apply_override(const std::string& assignment);
  /// Sets both the data and the training seed.
  void set_seed(std::uint64_t seed);

  /// Copies the shared dimensions (tasks, input size, classes) from the data
  /// spec into the model config and validates everything.
  void finalize();

  /// Every key with its resolved value; parses back to the same config.
  std::string to_text() const;

  data::RegimeSwitchingSpec test_spec() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace htan::cli
