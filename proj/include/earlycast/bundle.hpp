#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "earlycast/lstm_model.hpp"
#include "earlycast/tcn_model.hpp"

namespace earlycast {

/// A trained model read back from disk: exactly one of the members is set.
struct LoadedBundle {
  std::optional<LstmModel> lstm;
  std::optional<TcnModel> tcn;

  /// "MTO", "MTM", "HYB", "PREDICTOR", or the TCN config name.
  std::string variant() const;
};

/// Layout: docs/bundle_format.md. Writes go through a temporary file and a
/// rename, so readers never see a partial bundle.
void save_bundle(const std::filesystem::path& path, const LstmModel& model);
void save_bundle(const std::filesystem::path& path, const TcnModel& model);

/// Throws DataError on a malformed file.
LoadedBundle load_bundle(const std::filesystem::path& path);

}  // namespace earlycast
