#pragma once

#include "a3m/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace a3m {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Rescales to [0, 1] by (v - min) / (max - min). A constant input maps to
/// all zeros.
RowMat normalize_minmax(const RowMat& m);

/// One line per row, comma separated, shortest round-trip decimals.
std::string format_grid_csv(const RowMat& m);

/// Binary 8-bit PGM ("P5") of values in [0, 1], rounded to 0..255.
std::string format_pgm(const RowMat& unit);

/// "epoch,loss" header, then one 1-based row per epoch.
std::string format_loss_curve(const std::vector<double>& epoch_loss);

/// Writes `bytes` verbatim (binary mode), throwing IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& bytes);

} // namespace a3m
