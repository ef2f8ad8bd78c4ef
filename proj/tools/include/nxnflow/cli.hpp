#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "nxnflow/config.hpp"
#include "nxnflow/data.hpp"
#include "nxnflow/training.hpp"

namespace nxnflow::cli {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // verification failure or numeric abort
  kExitConfig = 2,   // bad flags, config keys or values
  kExitData = 3,     // missing or malformed input files
};

/// A dataset ready for training or evaluation.
struct LoadedData {
  std::unique_ptr<BatchSource> source;
  std::optional<ImageDataset> images;
  Tensor points;
  std::string description;
};

/// Generated data is a pure function of (config, seed).
LoadedData load_data(const DataConfig& config, std::uint64_t seed);
/// cfg.model with the input extents taken from the data.
ModelConfig model_config_for(const RunConfig& cfg, const LoadedData& data);

struct TrainPaths {
  std::string resume;  // checkpoint to continue from; empty for a fresh run
};

int cmd_train(const RunConfig& cfg, const TrainPaths& paths, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out, std::ostream& err);
int cmd_sample(const std::string& checkpoint, std::size_t count, double temperature, std::uint64_t seed,
               const std::string& out_path, std::ostream& out, std::ostream& err);
int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_path, std::ostream& out,
               std::ostream& err);

/// Parses the command line and dispatches; never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nxnflow::cli
